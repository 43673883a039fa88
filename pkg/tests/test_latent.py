"""Latent interpolation and variant sampling identities."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from terrasketch.latent import (
    DEFAULT_INTERPOLATION_GAMMAS,
    InterpolationRequest,
    VariantRequest,
    interpolate_codes,
    interpolate_terrains,
    sample_variants,
)
from terrasketch.vae import TopoVae, decode_code, encode_map, reconstruct_map

from conftest import stroke_maps

finite_vec = st.lists(
    st.floats(-10, 10, allow_nan=False, allow_infinity=False), min_size=1, max_size=16
)


@pytest.fixture(scope="module")
def small_vae():
    # briefly trained so decoded outputs respond to latent differences
    from terrasketch.vae import VaeConfig, train_vae

    data = [m.to_array() for m in stroke_maps(4, 64, seed=20)]
    cfg = VaeConfig(epochs=25, batch_size=2, seed=3, image_size=64,
                    base_channels=16, gamma_loss=0.001, lr=3e-3)
    return train_vae(data, cfg).model


class TestInterpolateCodes:
    def test_endpoints(self):
        z1, z2 = np.array([1.0, 2.0]), np.array([3.0, 4.0])
        assert np.array_equal(interpolate_codes(z1, z2, 1.0), z1)
        assert np.array_equal(interpolate_codes(z1, z2, 0.0), z2)

    def test_hand_value(self):
        z = interpolate_codes(np.array([2.0, 0.0]), np.array([0.0, 2.0]), 0.25)
        assert np.allclose(z, [0.5, 1.5])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            interpolate_codes(np.zeros(3), np.zeros(4), 0.5)

    def test_gamma_out_of_range(self):
        with pytest.raises(ValueError):
            interpolate_codes(np.zeros(3), np.zeros(3), 1.5)

    @given(v=finite_vec, g=st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_on_equal_codes(self, v, g):
        z = np.array(v)
        assert np.allclose(interpolate_codes(z, z, g), z, atol=1e-12)

    @given(v1=finite_vec, v2=finite_vec, g=st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_symmetry_and_bounds(self, v1, v2, g):
        n = min(len(v1), len(v2))
        z1, z2 = np.array(v1[:n]), np.array(v2[:n])
        a = interpolate_codes(z1, z2, g)
        b = interpolate_codes(z2, z1, 1.0 - g)
        assert np.allclose(a, b, atol=1e-9)
        lo, hi = np.minimum(z1, z2), np.maximum(z1, z2)
        assert np.all(a >= lo - 1e-9) and np.all(a <= hi + 1e-9)


class TestInterpolateTerrains:
    def test_gamma_one_equals_mean_reconstruction_bitwise(self, small_vae):
        a, b = stroke_maps(2, 64, seed=8)
        req = InterpolationRequest(topo_a=a, topo_b=b, gammas=(1.0, 0.0))
        outs = interpolate_terrains(req, small_vae)
        assert np.array_equal(outs[0], reconstruct_map(small_vae, a))
        assert np.array_equal(outs[1], reconstruct_map(small_vae, b))

    def test_default_gammas_give_five_maps(self, small_vae):
        a, b = stroke_maps(2, 64, seed=9)
        req = InterpolationRequest(topo_a=a, topo_b=b)
        outs = interpolate_terrains(req, small_vae)
        assert len(outs) == len(DEFAULT_INTERPOLATION_GAMMAS) == 5
        assert all(o.shape == (3, 64, 64) for o in outs)

    def test_degenerate_pair(self, small_vae):
        (a,) = stroke_maps(1, 64, seed=10)
        req = InterpolationRequest(topo_a=a, topo_b=a, gammas=(0.2, 0.8))
        outs = interpolate_terrains(req, small_vae)
        base = reconstruct_map(small_vae, a)
        assert np.array_equal(outs[0], base)
        assert np.array_equal(outs[1], base)

    def test_empty_gammas_rejected(self):
        a, b = stroke_maps(2, 64, seed=8)
        with pytest.raises(ValueError):
            InterpolationRequest(topo_a=a, topo_b=b, gammas=())

    def test_invalid_gamma_rejected(self):
        a, b = stroke_maps(2, 64, seed=8)
        with pytest.raises(ValueError):
            InterpolationRequest(topo_a=a, topo_b=b, gammas=(0.5, 1.2))


class TestSampleVariants:
    def test_eps_zero_collapses_to_mean(self, small_vae):
        (a,) = stroke_maps(1, 64, seed=12)
        req = VariantRequest(topo=a, n_variants=3, eps_scale=0.0, seed=5)
        outs = sample_variants(req, small_vae)
        base = reconstruct_map(small_vae, a)
        for o in outs:
            assert np.array_equal(o, base)

    def test_seed_reproducibility(self, small_vae):
        (a,) = stroke_maps(1, 64, seed=13)
        req = VariantRequest(topo=a, n_variants=3, eps_scale=1.0, seed=99)
        outs1 = sample_variants(req, small_vae)
        outs2 = sample_variants(req, small_vae)
        assert all(np.array_equal(x, y) for x, y in zip(outs1, outs2))

    def test_nonzero_eps_changes_output(self, small_vae):
        (a,) = stroke_maps(1, 64, seed=14)
        req = VariantRequest(topo=a, n_variants=2, eps_scale=3.0, seed=1)
        outs = sample_variants(req, small_vae)
        base = reconstruct_map(small_vae, a)
        assert not np.array_equal(outs[0], base)
        assert not np.array_equal(outs[0], outs[1])

    def test_variant_formula(self, small_vae):
        # z = mu + sigma * eps with the same seeded stream
        (a,) = stroke_maps(1, 64, seed=15)
        req = VariantRequest(topo=a, n_variants=2, eps_scale=0.5, seed=77)
        outs = sample_variants(req, small_vae)
        code = encode_map(small_vae, a)
        rng = np.random.default_rng(77)
        for k in range(2):
            eps = rng.standard_normal(code.mu.shape[0]) * 0.5
            z = code.mu + code.sigma * eps
            assert np.array_equal(outs[k], decode_code(small_vae, z))

    def test_bad_requests_rejected(self):
        (a,) = stroke_maps(1, 64, seed=16)
        with pytest.raises(ValueError):
            VariantRequest(topo=a, n_variants=0)
        with pytest.raises(ValueError):
            VariantRequest(topo=a, n_variants=1, eps_scale=-1.0)
