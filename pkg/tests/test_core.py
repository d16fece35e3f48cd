import numpy as np
import pytest

from chromastack.core import (
    DEFAULT_WAVELENGTHS,
    LLTMaps,
    MultispectralFocalStack,
    ReconConfig,
    Slice,
    SpectralVaryingStack,
    StackError,
    check_focal_stack,
    check_spectral_varying,
    validate_stack,
)


def make_slices(n=10, shape=(8, 8), seed=0):
    rng = np.random.default_rng(seed)
    return [Slice(k, DEFAULT_WAVELENGTHS[k], rng.random(shape)) for k in range(n)]


def test_default_wavelengths_are_430_to_700_in_30nm_steps():
    assert DEFAULT_WAVELENGTHS == (430.0, 460.0, 490.0, 520.0, 550.0, 580.0, 610.0, 640.0, 670.0, 700.0)


class TestSpectralVarying:
    def test_well_formed_stack(self):
        stack = SpectralVaryingStack(make_slices(), range(10), DEFAULT_WAVELENGTHS)
        assert validate_stack(stack).ok
        assert len(stack) == 10 and stack.shape == (8, 8)

    def test_duplicate_depth_names_index(self):
        slices = make_slices()
        slices[5] = Slice(3, slices[5].wavelength_nm, slices[5].image)
        res = check_spectral_varying(slices, range(10), DEFAULT_WAVELENGTHS)
        assert not res.ok and res.kind == "duplicate_depth"
        assert "3" in res.message and res.location == (5,)
        with pytest.raises(StackError) as exc:
            SpectralVaryingStack(slices, range(10), DEFAULT_WAVELENGTHS)
        assert exc.value.result.kind == "duplicate_depth"

    def test_nan_pixel_reports_coordinates(self):
        slices = make_slices()
        img = slices[2].image.copy()
        img[4, 6] = np.nan
        slices[2] = Slice(2, slices[2].wavelength_nm, img)
        res = check_spectral_varying(slices, range(10), DEFAULT_WAVELENGTHS)
        assert res.kind == "non_finite" and res.location == (2, 4, 6)
        assert "row=4" in res.message and "col=6" in res.message

    def test_dimension_mismatch(self):
        slices = make_slices()
        slices[7] = Slice(7, slices[7].wavelength_nm, np.zeros((8, 9)))
        res = check_spectral_varying(slices, range(10), DEFAULT_WAVELENGTHS)
        assert res.kind == "dimension" and res.location == (7,)

    def test_non_monotone_wavelengths(self):
        wl = list(DEFAULT_WAVELENGTHS)
        wl[4], wl[5] = wl[5], wl[4]
        slices = [Slice(k, wl[k], s.image) for k, s in enumerate(make_slices())]
        res = check_spectral_varying(slices, range(10), wl)
        assert res.kind == "wavelength_order" and res.location == (5,)

    def test_depth_index_out_of_range(self):
        slices = make_slices(3)
        slices[1] = Slice(3, slices[1].wavelength_nm, slices[1].image)
        assert check_spectral_varying(slices, range(3), DEFAULT_WAVELENGTHS[:3]).kind == "depth_coverage"

    def test_slice_wavelength_must_follow_schedule(self):
        slices = make_slices(3)
        slices[1] = Slice(1, 999.0, slices[1].image)
        assert check_spectral_varying(slices, range(3), DEFAULT_WAVELENGTHS[:3]).kind == "schedule"

    def test_images_are_frozen(self):
        stack = SpectralVaryingStack(make_slices(2), (1.0, 2.0), DEFAULT_WAVELENGTHS[:2])
        with pytest.raises(ValueError):
            stack.slices[0].image[0, 0] = 1.0

    def test_construction_copies_input(self):
        slices = make_slices(2)
        stack = SpectralVaryingStack(slices, (1.0, 2.0), DEFAULT_WAVELENGTHS[:2])
        slices[0].image[0, 0] = -5.0
        assert stack.slices[0].image[0, 0] != -5.0


class TestFocalStack:
    def test_well_formed(self):
        data = np.random.default_rng(1).random((3, 4, 5, 6))
        stack = MultispectralFocalStack(data, (1, 2, 3), (400, 500, 600, 700))
        assert (stack.depths, stack.wavelengths, stack.shape) == (3, 4, (5, 6))
        assert validate_stack(stack)

    def test_schedule_length_mismatch(self):
        with pytest.raises(StackError):
            MultispectralFocalStack(np.zeros((3, 4, 5, 5)), (1, 2), (400, 500, 600, 700))

    def test_non_finite_cell_location(self):
        data = np.zeros((2, 2, 5, 5))
        data[1, 0, 3, 2] = np.inf
        res = check_focal_stack(data, (1, 2), (400, 500))
        assert res.kind == "non_finite" and res.location == (1, 0, 3, 2)

    def test_validate_rejects_non_stack(self):
        with pytest.raises(TypeError):
            validate_stack("not a stack")


class TestLLTMaps:
    def test_identity(self):
        m = LLTMaps.identity((3, 4))
        assert m.shape == (3, 4) and (m.gain == 1).all() and (m.offset == 0).all()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            LLTMaps(np.ones((3, 4)), np.zeros((4, 3)))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            LLTMaps(np.full((2, 2), np.nan), np.zeros((2, 2)))


class TestReconConfig:
    def test_defaults(self):
        cfg = ReconConfig()
        assert (cfg.blur_sigma, cfg.alpha, cfg.beta) == (10.0, 1.0, 0.1)
        assert (cfg.max_iters, cfg.rel_tol, cfg.init_step) == (500, 1e-6, 1.0)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(blur_sigma=0), dict(alpha=-1), dict(beta=-0.1), dict(max_iters=0), dict(rel_tol=0), dict(init_step=0)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ReconConfig(**kwargs)
