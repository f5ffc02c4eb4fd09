"""Command-line front end: ``dlpr {simulate,retrieve,learn-dict,eval,corpus}``.

Experiments are described by YAML spec files::

    scene:
      corpus: 1            # or surface: {kind: ..}, group: 1, or truth: path
      rows: 64
      cols: 64
      scale: auto          # amplitude factor; auto puts chi=1e-5 at -7 dB
    masks: {count: 12, seed: 1}
    noise: {model: poisson, chi: 1.0e-5, seed: 7}
    solver: dlpr           # dlpr | dlpr_prior | gsf
    config: {n_iter: 20}   # SolverConfig overrides
    prior: dict.cplx       # dlpr_prior only
    output: runs/example

``--set key.path=value`` overrides any spec entry.  Validation problems exit
with status 2 and name the offending spec line.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import io
from .core import ComplexField, DimensionError, rmse_wrapped, wrap
from .optics import generate_masks
from .retrieval import SolverConfig, dlpr, dlpr_prior, gsf, learn_dictionary
from .sensor import (gaussian_sigma_for_snr, intensities,
                     intensity_scale_for_snr, simulate_gaussian, simulate_noiseless,
                     simulate_poisson)
from .synthdata import (GroupSpec, SurfaceSpec, corpus_entry, corpus_table, make_signal,
                        prior_training_set)

log = logging.getLogger("dlpr")

SOLVERS = ("dlpr", "dlpr_prior", "gsf")
TOP_KEYS = {"scene", "masks", "noise", "solver", "config", "prior", "output", "data",
            "checkpoint", "resume", "sources", "training_set", "dictionary"}


class SpecError(ValueError):
    """Invalid experiment spec; the message carries the file and line."""


# ---------------------------------------------------------------- spec loading

class Spec:
    """Parsed spec with line numbers of every key for error messages."""

    def __init__(self, data, lines, path):
        self.data = data
        self.lines = lines
        self.path = path

    def line(self, key):
        parts = key.split(".")
        while parts:
            k = ".".join(parts)
            if k in self.lines:
                return self.lines[k]
            parts.pop()
        return None

    def error(self, key, message):
        line = self.line(key)
        where = f"{self.path}:{line}" if line else str(self.path)
        return SpecError(f"{where}: {key}: {message}")

    def get(self, key, default=None):
        node = self.data
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node


def _line_map(node, prefix, out):
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)


def load_spec(path, overrides=()):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: cannot read spec: {exc}") from None
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise SpecError(f"{where}: malformed YAML: {exc}") from None
    data = data or {}
    if not isinstance(data, dict):
        raise SpecError(f"{path}:1: spec must be a mapping")
    lines = {}
    if node is not None:
        _line_map(node, "", lines)
    spec = Spec(data, lines, path)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise SpecError(f"--set {item!r}: expected key=value")
        target = spec.data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise SpecError(f"--set {item!r}: {part} is not a mapping")
        target[parts[-1]] = yaml.safe_load(raw)
    unknown = set(spec.data) - TOP_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise spec.error(k, f"unknown key (expected one of {sorted(TOP_KEYS)})")
    return spec


def _number(spec, key, default=None, positive=False, integer=False):
    v = spec.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise spec.error(key, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise spec.error(key, f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise spec.error(key, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _output(spec, required=True):
    out = spec.get("output")
    if out is None:
        if required:
            raise spec.error("output", "an output directory is required")
        return None
    return Path(out)


# ---------------------------------------------------------------- resolution

def _scene(spec):
    """Truth field before intensity scaling."""
    scene = spec.get("scene")
    if not isinstance(scene, dict):
        raise spec.error("scene", "a scene mapping is required")
    if "truth" in scene:
        p = Path(scene["truth"])
        if not p.exists():
            raise spec.error("scene.truth", f"file not found: {p}")
        return ComplexField(io.read_raster(p))
    rows = _number(spec, "scene.rows", 100, positive=True, integer=True)
    cols = _number(spec, "scene.cols", rows, positive=True, integer=True)
    peak = _number(spec, "scene.peak", 8.0)
    if "corpus" in scene:
        row = _number(spec, "scene.corpus", integer=True)
        try:
            return corpus_entry(row, rows, cols, peak).signal()
        except ValueError as exc:
            raise spec.error("scene.corpus", str(exc)) from None
    if "surface" in scene:
        surf = scene["surface"]
        if not isinstance(surf, dict):
            raise spec.error("scene.surface", "expected a mapping")
        try:
            s = SurfaceSpec(rows=rows, cols=cols, **{"peak": peak, **surf})
            group = GroupSpec(int(scene.get("group", 1)))
            amp = scene.get("amplitude")
            amp_spec = SurfaceSpec(rows=rows, cols=cols, **amp) if amp else None
            return make_signal(s, group, amp_spec)
        except (TypeError, ValueError) as exc:
            raise spec.error("scene.surface", str(exc)) from None
    raise spec.error("scene", "expected one of corpus, surface or truth")


def _masks(spec, shape):
    count = _number(spec, "masks.count", 12, positive=True, integer=True)
    seed = _number(spec, "masks.seed", 0, integer=True)
    return generate_masks(shape[0], shape[1], count, seed)


def _scale(spec, x, masks):
    val = spec.get("scene.scale", "auto")
    if val == "auto":
        return intensity_scale_for_snr(x, masks)
    return _number(spec, "scene.scale", positive=True)


def _simulate(spec, x, masks):
    kind = spec.get("noise.model", "poisson")
    seed = _number(spec, "noise.seed", 0, integer=True)
    if kind == "poisson":
        chi = _number(spec, "noise.chi", None)
        if chi is None:
            raise spec.error("noise", "poisson noise needs chi")
        if not chi > 0:
            raise spec.error("noise.chi", f"must be positive, got {chi!r}")
        return simulate_poisson(x, masks, chi, seed)
    if kind == "gaussian":
        if spec.get("noise.sigma") is not None:
            sigma = _number(spec, "noise.sigma", positive=True)
        elif spec.get("noise.snr_db") is not None:
            sigma = gaussian_sigma_for_snr(intensities(x, masks), _number(spec, "noise.snr_db"))
        else:
            raise spec.error("noise", "gaussian noise needs sigma or snr_db")
        return simulate_gaussian(x, masks, sigma, seed)
    if kind == "noiseless":
        return simulate_noiseless(x, masks)
    raise spec.error("noise.model", f"unknown noise model {kind!r}")


def _solver_config(spec):
    over = spec.get("config") or {}
    if not isinstance(over, dict):
        raise spec.error("config", "expected a mapping of SolverConfig fields")
    names = {f.name for f in dataclasses.fields(SolverConfig)}
    for key in over:
        if key not in names:
            raise spec.error(f"config.{key}", f"unknown solver setting (expected one of {sorted(names)})")
    try:
        return SolverConfig(**over)
    except (TypeError, ValueError) as exc:
        raise spec.error("config", str(exc)) from None


# ---------------------------------------------------------------- commands

def cmd_simulate(spec):
    out = _output(spec)
    x0 = _scene(spec)
    masks = _masks(spec, x0.shape)
    c = _scale(spec, x0, masks)
    x = ComplexField(c * x0.image)
    obs = _simulate(spec, x, masks)
    out.mkdir(parents=True, exist_ok=True)
    io.save_field(out / "truth.cplx", x)
    io.save_masks(out / "masks", masks)
    io.save_observations(out / "observations", obs)
    io.write_json(out / "simulation.json", {"scale": c, "spec": spec.data})
    io.save_png(out / "truth_phase.png", x.image, "phase")
    io.save_png(out / "truth_amplitude.png", x.image, "amplitude")
    print(f"simulated {obs.count} observations of {x.rows}x{x.cols} into {out}")
    return 0


def cmd_retrieve(spec):
    out = _output(spec)
    solver = spec.get("solver", "dlpr")
    if solver not in SOLVERS:
        raise spec.error("solver", f"unknown solver {solver!r}; expected one of {SOLVERS}")
    cfg = _solver_config(spec)
    D_prior = None
    if solver == "dlpr_prior":
        prior = spec.get("prior")
        if prior is None:
            raise spec.error("solver", "dlpr_prior requires a prior dictionary path")
        if not Path(prior).exists():
            raise spec.error("prior", f"file not found: {prior}")
        D_prior = io.load_dictionary(prior)
    data = Path(spec.get("data", out))
    for need in ("masks/masks.json", "observations/observations.json"):
        if not (data / need).exists():
            raise spec.error("data", f"missing {data / need}; run simulate first")
    masks = io.load_masks(data / "masks")
    obs = io.load_observations(data / "observations")
    truth = ComplexField(io.read_raster(data / "truth.cplx")) if (data / "truth.cplx").exists() else None
    out.mkdir(parents=True, exist_ok=True)

    trace_path = out / "trace.jsonl"
    checkpoint = out / "checkpoint.npz" if spec.get("checkpoint", False) else None
    resume = bool(spec.get("resume", False))
    if not (resume and checkpoint is not None and checkpoint.exists()):
        trace_path.write_text("")

    def emit(row):
        with open(trace_path, "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")

    kwargs = dict(truth=truth, checkpoint=checkpoint, resume=resume, callback=emit)
    tic = time.perf_counter()
    try:
        if solver == "gsf":
            if spec.get("config.n_iter") is None:
                cfg = cfg.replace(n_iter=50)
            res = gsf(obs, masks, cfg, **kwargs)
        elif solver == "dlpr":
            res = dlpr(obs, masks, cfg, **kwargs)
        else:
            res = dlpr_prior(obs, masks, cfg, D_prior, **kwargs)
    except (ValueError, DimensionError) as exc:
        raise SpecError(f"{spec.path}: {solver} failed: {exc}") from None
    elapsed = time.perf_counter() - tic

    io.save_field(out / "estimate.cplx", res.x)
    io.save_png(out / "estimate_phase.png", res.x.image, "phase")
    io.save_png(out / "estimate_amplitude.png", res.x.image, "amplitude")
    if res.dictionary is not None:
        io.save_dictionary(out / "dictionary.cplx", res.dictionary, {"source": f"{solver} run"})
    final = res.trace[-1] if res.trace else {}
    summary = {"solver": solver, "iterations": res.iterations, "rmse": final.get("rmse"),
               "objective": final.get("objective"), "config": cfg.to_dict(), "seconds": elapsed}
    io.write_json(out / "summary.json", summary)
    rmse = summary["rmse"]
    print(f"{solver}: {res.iterations} iterations, final rmse "
          f"{'n/a' if rmse is None else f'{rmse:.6g}'} rad, {elapsed:.1f} s")
    return 0


def cmd_learn_dict(spec):
    out = spec.get("dictionary")
    if out is None:
        raise spec.error("dictionary", "an output dictionary path is required")
    images = []
    sources = spec.get("sources")
    if sources is not None:
        if not isinstance(sources, list) or not sources:
            raise spec.error("sources", "expected a non-empty list of raster paths")
        for i, p in enumerate(sources):
            if not Path(p).exists():
                raise spec.error("sources", f"entry {i}: file not found: {p}")
            images.append(io.read_raster(p))
    ts = spec.get("training_set")
    if ts is not None:
        if ts != "quarter_gaussians":
            raise spec.error("training_set", f"unknown training set {ts!r}")
        rows = _number(spec, "scene.rows", 100, positive=True, integer=True)
        cols = _number(spec, "scene.cols", rows, positive=True, integer=True)
        images.extend(f.image for f in prior_training_set(rows, cols, _number(spec, "scene.peak", 8.0)))
    if not images:
        raise spec.error("sources", "no training sources given")
    cfg = _solver_config(spec)
    n_iter = _number(spec, "config.codl_batches", None, integer=True)
    try:
        D = learn_dictionary(images, cfg, n_iter=n_iter)
    except (ValueError, DimensionError) as exc:
        raise SpecError(f"{spec.path}: dictionary learning failed: {exc}") from None
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    meta = {"sources": [str(s) for s in (sources or [])], "training_set": ts,
            "lambda": cfg.codl_lambda, "seed": cfg.seed}
    io.save_dictionary(out, D, meta)
    print(f"learned {D.k} atoms of {D.w}x{D.w} from {len(images)} images into {out}")
    return 0


def cmd_eval(estimate, truth, out=None):
    est, tru = io.read_raster(estimate), io.read_raster(truth)
    if est.shape != tru.shape:
        raise DimensionError(f"estimate {est.shape} and truth {tru.shape} differ in shape")
    aligned = rmse_wrapped(est, tru, align_global_phase=True)
    unaligned = rmse_wrapped(est, tru, align_global_phase=False)
    diff = np.angle(est) - np.angle(tru)
    offset = float(np.angle(np.sum(np.exp(1j * diff))))
    report = {"rmse_aligned": aligned, "rmse_unaligned": unaligned, "global_offset": offset,
              "rows": est.shape[0], "cols": est.shape[1]}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        wrapped = wrap(diff - offset)
        io.write_raster(out / "phase_difference.real", wrapped)
        io.save_png(out / "phase_difference.png", wrapped, "phase")
        io.save_png(out / "estimate_phase.png", est, "phase")
        io.save_png(out / "truth_phase.png", tru, "phase")
        io.write_json(out / "report.json", report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_corpus(export=None, out=None, rows=100, cols=None, peak=8.0):
    table = corpus_table(rows, cols or rows, peak)
    if export is None:
        for e in table:
            amp = e.amplitude.kind if e.amplitude is not None else "-"
            print(f"{e.number}\tgroup {e.group.group}\t{e.phase.kind}\tamplitude {amp}\t{e.name}")
        return 0
    if out is None:
        raise SpecError("corpus --export needs --out")
    entry = corpus_entry(export, rows, cols or rows, peak)
    io.save_field(out, entry.signal())
    print(f"wrote corpus row {export} to {out}")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="dlpr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "retrieve", "learn-dict"):
        s = sub.add_parser(name)
        s.add_argument("spec", help="YAML experiment spec")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a spec entry, e.g. noise.chi=1e-3")
    e = sub.add_parser("eval")
    e.add_argument("estimate")
    e.add_argument("truth")
    e.add_argument("--out", default=None)
    c = sub.add_parser("corpus")
    c.add_argument("--export", type=int, default=None, metavar="ROW")
    c.add_argument("--out", default=None)
    c.add_argument("--rows", type=int, default=100)
    c.add_argument("--cols", type=int, default=None)
    c.add_argument("--peak", type=float, default=8.0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("simulate", "retrieve", "learn-dict"):
            spec = load_spec(args.spec, args.set)
            cmd = {"simulate": cmd_simulate, "retrieve": cmd_retrieve, "learn-dict": cmd_learn_dict}
            return cmd[args.command](spec)
        if args.command == "eval":
            return cmd_eval(args.estimate, args.truth, args.out)
        return cmd_corpus(args.export, args.out, args.rows, args.cols, args.peak)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, io.RasterFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
