import numpy as np
import pytest

from dlpr.core import DimensionError
from dlpr.synthdata import (COUPLINGS, SURFACE_KINDS, GroupSpec, SurfaceSpec, amplitude_for,
                            corpus_entry, corpus_table, make_signal, make_surface, octant_index,
                            prior_training_set, quarter_gaussians, textured_scene)


@pytest.mark.parametrize("kind", SURFACE_KINDS)
def test_zero_peak_gives_zero_raster(kind):
    assert np.all(make_surface(SurfaceSpec(kind, 20, 24, peak=0.0)) == 0)


@pytest.mark.parametrize("kind", SURFACE_KINDS)
@pytest.mark.parametrize("shape", [(33, 33), (64, 64), (40, 57)])
def test_surfaces_finite_with_exact_peak(kind, shape):
    psi = make_surface(SurfaceSpec(kind, *shape, peak=8.0))
    assert psi.shape == shape and np.all(np.isfinite(psi))
    assert abs(np.max(np.abs(psi)) - 8.0) <= 1e-12


def test_gaussian_centered_max_and_symmetry():
    psi = make_surface(SurfaceSpec("gaussian", 31, 31))
    assert np.unravel_index(np.argmax(psi), psi.shape) == (15, 15)
    np.testing.assert_allclose(psi, psi[::-1, :], atol=1e-14)
    np.testing.assert_allclose(psi, psi[:, ::-1], atol=1e-14)
    np.testing.assert_allclose(psi, psi.T, atol=1e-14)


def test_truncated_gaussian_zero_outside_disk():
    spec = SurfaceSpec("truncated_gaussian", 41, 41)
    psi = make_surface(spec)
    rr, cc = np.meshgrid(np.arange(41) - 20, np.arange(41) - 20, indexing="ij")
    outside = rr ** 2 + cc ** 2 > (spec.radius * 41) ** 2
    assert np.all(psi[outside] == 0) and np.all(psi[~outside] > 0)


def test_alternate_octants():
    psi = make_surface(SurfaceSpec("alternate_octant_gaussian", 64, 64))
    bins = octant_index(64, 64)
    zero_bins = [k for k in range(8) if np.all(psi[bins == k] == 0)]
    assert zero_bins == [1, 3, 5, 7]
    for k in (0, 2, 4, 6):
        assert np.all(psi[bins == k] > 0)
    # bin edges follow atan2 in [k pi/4, (k+1) pi/4)
    rr, cc = np.meshgrid(np.arange(64) - 31.5, np.arange(64) - 31.5, indexing="ij")
    ang = np.mod(np.arctan2(rr, cc), 2 * np.pi)
    np.testing.assert_array_equal(bins, np.minimum((ang // (np.pi / 4)).astype(int), 7))


def test_shear_and_quadratic_forms():
    sh = make_surface(SurfaceSpec("shear_plane", 11, 21, peak=4.0))
    assert sh[0, 0] == 0 and sh[-1, -1] == pytest.approx(4.0)
    np.testing.assert_allclose(np.diff(sh, axis=0), 4.0 / 2 / 10)
    q = make_surface(SurfaceSpec("quadratic", 21, 21, peak=4.0))
    assert q[10, 10] == 0 and q[0, 0] == pytest.approx(4.0)


@pytest.mark.parametrize("kind", ["gaussian", "quadratic", "shear_plane"])
def test_smooth_kinds_have_unambiguous_fringes(kind):
    psi = make_surface(SurfaceSpec(kind))
    assert max(np.abs(np.diff(psi, axis=0)).max(), np.abs(np.diff(psi, axis=1)).max()) < np.pi


def test_mountain_seeded():
    a = make_surface(SurfaceSpec("mountain", 32, 32, seed=3))
    np.testing.assert_array_equal(a, make_surface(SurfaceSpec("mountain", 32, 32, seed=3)))
    assert not np.array_equal(a, make_surface(SurfaceSpec("mountain", 32, 32, seed=4)))
    assert a.min() == 0


def test_spec_validation():
    with pytest.raises(ValueError):
        SurfaceSpec("spiral")
    with pytest.raises(DimensionError):
        SurfaceSpec("gaussian", 0, 4)
    with pytest.raises(ValueError):
        SurfaceSpec("gaussian", width=0)
    with pytest.raises(ValueError):
        GroupSpec(5)
    with pytest.raises(ValueError):
        GroupSpec(3, coupling="unit")
    assert GroupSpec(4).coupling == COUPLINGS[4] == "abs_cos15"


def test_group_amplitudes():
    psi = make_surface(SurfaceSpec("truncated_gaussian", 40, 40))
    x1 = make_signal(SurfaceSpec("truncated_gaussian", 40, 40), GroupSpec(1))
    np.testing.assert_allclose(np.abs(x1.image), 1.0)
    np.testing.assert_allclose(x1.phase, np.angle(np.exp(1j * psi)), atol=1e-12)
    a3 = amplitude_for(psi, GroupSpec(3))
    assert a3.min() >= 1 and a3.max() <= 2
    np.testing.assert_allclose(a3[np.abs(psi) == np.abs(psi).max()], 2.0)
    np.testing.assert_allclose(amplitude_for(np.zeros((4, 4)), GroupSpec(4)), 2.0)
    a4 = amplitude_for(psi, GroupSpec(4))
    assert a4.min() >= 1 and a4.max() <= 2
    with pytest.raises(ValueError):
        make_signal(SurfaceSpec("gaussian", 8, 8), GroupSpec(2))
    with pytest.raises(DimensionError):
        amplitude_for(psi, GroupSpec(2), np.ones((3, 3)))


def test_group2_amplitude_independent_surface():
    x = make_signal(SurfaceSpec("shear_plane", 32, 32), GroupSpec(2), SurfaceSpec("gaussian", peak=1.0))
    a = np.abs(x.image)
    assert a.min() >= 1 and a.max() == pytest.approx(2.0)


def test_corpus_table_structure():
    table = corpus_table(32, 32)
    assert len(table) == 9
    assert [e.number for e in table] == list(range(1, 10))
    assert [e.group.group for e in table] == [1, 1, 2, 2, 2, 3, 3, 4, 4]
    phases = ["truncated_gaussian", "shear_plane", "shear_plane", "truncated_gaussian", "shear_plane",
              "truncated_gaussian", "shear_plane", "truncated_gaussian", "shear_plane"]
    assert [e.phase.kind for e in table] == phases
    assert [e.amplitude.kind for e in table[2:5]] == ["mountain", "quadratic", "gaussian"]
    for e in table:
        a = np.abs(e.signal().image)
        assert a.min() > 0
    with pytest.raises(ValueError):
        corpus_entry(10)
    np.testing.assert_array_equal(corpus_entry(4, 32, 32).signal().image, table[3].signal().image)


def test_prior_training_set_and_scenes():
    qs = quarter_gaussians(20, 20)
    assert len(qs) == 5
    np.testing.assert_allclose(sum(qs[1:]), qs[0])
    imgs = prior_training_set(20, 20)
    assert all(np.allclose(np.abs(f.image), 1.0) for f in imgs)
    s = textured_scene(16, 16, seed=2)
    np.testing.assert_allclose(np.abs(s.image), 1.0)
    np.testing.assert_array_equal(s.image, textured_scene(16, 16, seed=2).image)
