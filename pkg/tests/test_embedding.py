import numpy as np
import pytest
from hypolap.embedding import (
    hbdm_distance,
    hbdm_embed,
    hdm_distance,
    hdm_embed,
    hdm_normalize,
)
from hypolap.laplacian import build_laplacian
from hypolap.spectral import SpectralResult, smallest_eigenpairs


def full_spectrum(W_dense, offsets):
    L = build_laplacian(W_dense, "symmetric")
    n = L.shape[0]
    res = smallest_eigenpairs(L, n, dense_cutoff=10**6)
    return SpectralResult(
        eigenvalues=res.eigenvalues,
        eigenvectors=res.eigenvectors,
        residuals=res.residuals,
        block_offsets=np.asarray(offsets),
    ), L


def bundle_weights(sizes, seed=0):
    rng = np.random.default_rng(seed)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = offsets[-1]
    W = np.zeros((n, n))
    for i in range(len(sizes)):
        for j in range(i + 1, len(sizes)):
            b = rng.uniform(0.2, 1.0, (sizes[i], sizes[j]))
            W[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = b
            W[offsets[j]:offsets[j + 1], offsets[i]:offsets[i + 1]] = b.T
    return W, offsets


TWO_NODE = np.array([[0.0, 1.0], [1.0, 0.0]])


class TestHdmEmbed:
    def test_t_zero_raw_eigenvectors(self):
        spec, _ = full_spectrum(TWO_NODE, [0, 1, 2])
        emb = hdm_embed(spec, 0.0)
        assert np.allclose(emb.coords[:, 0], spec.eigenvectors[:, 1])

    def test_two_node_t_one(self):
        # eigenvalues {0, 2}; column = 2^1 * v1 with v1 = (1,-1)/sqrt(2) up to sign
        spec, _ = full_spectrum(TWO_NODE, [0, 1, 2])
        emb = hdm_embed(spec, 1.0)
        expect = 2.0 * np.array([1.0, -1.0]) / np.sqrt(2.0)
        got = emb.coords[:, 0]
        assert np.allclose(got, expect, atol=1e-12) or np.allclose(got, -expect, atol=1e-12)

    def test_convention_changes_only_column_scale(self):
        rng = np.random.default_rng(1)
        Q = np.linalg.qr(rng.standard_normal((8, 8)))[0]
        spec = SpectralResult(
            eigenvalues=np.sort(rng.uniform(0.0, 1.0, 8)),
            eigenvectors=Q,
            residuals=np.zeros(8),
        )
        a = hdm_embed(spec, 1.5, "paper_literal").coords
        b = hdm_embed(spec, 1.5, "diffusion").coords
        for col in range(a.shape[1]):
            nz = np.abs(b[:, col]) > 1e-13
            if not nz.any():
                continue
            r = a[nz, col] / b[nz, col]
            assert np.max(np.abs(r - r[0])) <= 1e-8 * max(1.0, abs(r[0]))

    def test_diffusion_requires_bounded_eigenvalues(self):
        spec = SpectralResult(
            eigenvalues=np.array([0.0, 1.5]),
            eigenvectors=np.eye(2),
            residuals=np.zeros(2),
        )
        with pytest.raises(ValueError):
            hdm_embed(spec, 1.0, "diffusion")

    def test_negative_time_rejected(self):
        spec, _ = full_spectrum(TWO_NODE, [0, 1, 2])
        with pytest.raises(ValueError):
            hdm_embed(spec, -1.0)


class TestHdmNormalize:
    def test_three_four_five(self):
        emb = hdm_embed_rows(np.array([[3.0, 4.0]]))
        out = hdm_normalize(emb)
        assert np.allclose(out.coords, [[0.6, 0.8]])

    def test_idempotent(self):
        emb = hdm_embed_rows(np.array([[0.6, 0.8], [1.0, 0.0]]))
        once = hdm_normalize(emb)
        twice = hdm_normalize(once)
        assert np.max(np.abs(once.coords - twice.coords)) <= 1e-15

    def test_unit_rows(self):
        rng = np.random.default_rng(3)
        emb = hdm_embed_rows(rng.standard_normal((20, 5)))
        out = hdm_normalize(emb)
        assert np.max(np.abs(np.linalg.norm(out.coords, axis=1) - 1.0)) <= 1e-12

    def test_zero_row_identified(self):
        emb = hdm_embed_rows(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValueError, match="row 1"):
            hdm_normalize(emb)


def hdm_embed_rows(rows):
    from hypolap.embedding import EmbeddingCoordinates

    return EmbeddingCoordinates(coords=rows, t=1.0, convention="paper_literal")


class TestHdmDistance:
    def test_identity(self):
        emb = hdm_embed_rows(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert hdm_distance(emb, 0, 0) == 0.0

    def test_symmetry_and_pythagoras(self):
        emb = hdm_embed_rows(np.array([[0.0, 0.0], [3.0, 4.0]]))
        assert hdm_distance(emb, 0, 1) == hdm_distance(emb, 1, 0) == 5.0

    def test_triangle_inequality(self):
        rng = np.random.default_rng(5)
        emb = hdm_embed_rows(rng.standard_normal((30, 6)))
        for _ in range(50):
            p, q, r = rng.integers(30, size=3)
            assert hdm_distance(emb, int(p), int(r)) <= (
                hdm_distance(emb, int(p), int(q)) + hdm_distance(emb, int(q), int(r)) + 1e-12
            )

    def test_out_of_range(self):
        emb = hdm_embed_rows(np.zeros((2, 2)))
        with pytest.raises(IndexError):
            hdm_distance(emb, 0, 5)


class TestHbdm:
    def test_gram_identity_integer_time(self):
        # inner products of V^t rows equal squared Frobenius norms of the
        # blocks of the dense t-th matrix power
        W, offsets = bundle_weights([3, 4, 5], seed=2)
        spec, L = full_spectrum(W, offsets)
        t = 2
        emb = hbdm_embed(spec, float(t))
        P = np.linalg.matrix_power(L.toarray(), t)
        for i in range(3):
            for j in range(3):
                blk = P[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]]
                gram = float(emb.per_fibre[i] @ emb.per_fibre[j])
                assert gram == pytest.approx(np.sum(blk**2), abs=1e-10)

    def test_single_fibre_orthonormality(self):
        W, offsets = bundle_weights([2, 3], seed=3)
        spec, _ = full_spectrum(W, offsets)
        # one fibre covering everything: entries lambda_l^{t/2} lambda_m^{t/2} delta_lm
        solo = SpectralResult(
            eigenvalues=spec.eigenvalues,
            eigenvectors=spec.eigenvectors,
            residuals=spec.residuals,
            block_offsets=np.array([0, offsets[-1]]),
        )
        t = 3.0
        emb = hbdm_embed(solo, t)
        m = spec.m
        G = emb.per_fibre[0].reshape(m, m)
        lam = np.maximum(spec.eigenvalues, 0.0)
        assert np.allclose(G, np.diag(lam**t), atol=1e-10)

    def test_sign_flip_invariance_of_gram(self):
        W, offsets = bundle_weights([3, 3, 4], seed=4)
        spec, _ = full_spectrum(W, offsets)
        emb = hbdm_embed(spec, 2.0)
        flipped_vecs = spec.eigenvectors.copy()
        flipped_vecs[:, 2] *= -1.0
        flipped = SpectralResult(
            eigenvalues=spec.eigenvalues,
            eigenvectors=flipped_vecs,
            residuals=spec.residuals,
            block_offsets=spec.block_offsets,
        )
        emb2 = hbdm_embed(flipped, 2.0)
        g1 = emb.per_fibre @ emb.per_fibre.T
        g2 = emb2.per_fibre @ emb2.per_fibre.T
        assert np.max(np.abs(g1 - g2)) <= 1e-12

    def test_degenerate_remix_invariance(self):
        # complete bipartite between two 3-sample fibres: the spectrum has
        # exactly degenerate clusters; remixing eigenvectors inside one
        # cluster must leave all embedding Gram entries unchanged
        sizes = [3, 3]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        W = np.zeros((6, 6))
        W[:3, 3:] = 1.0
        W[3:, :3] = 1.0
        spec, _ = full_spectrum(W, offsets)
        lam = spec.eigenvalues
        # find a degenerate cluster of size > 1
        groups = {}
        for idx, v in enumerate(np.round(lam, 10)):
            groups.setdefault(v, []).append(idx)
        cluster = next(g for g in groups.values() if len(g) > 1)
        rng = np.random.default_rng(0)
        Q = np.linalg.qr(rng.standard_normal((len(cluster), len(cluster))))[0]
        mixed_vecs = spec.eigenvectors.copy()
        mixed_vecs[:, cluster] = mixed_vecs[:, cluster] @ Q
        # make the cluster eigenvalues exactly equal so the remix is legal
        lam_fixed = lam.copy()
        lam_fixed[cluster] = lam[cluster].mean()
        a = hbdm_embed(
            SpectralResult(lam_fixed, spec.eigenvectors, spec.residuals, offsets), 2.0
        )
        b = hbdm_embed(
            SpectralResult(lam_fixed, mixed_vecs, spec.residuals, offsets), 2.0
        )
        ga = a.per_fibre @ a.per_fibre.T
        gb = b.per_fibre @ b.per_fibre.T
        assert np.max(np.abs(ga - gb)) <= 1e-12

    def test_distance_expansion_identity(self):
        rng = np.random.default_rng(6)
        from hypolap.embedding import BaseEmbeddingCoordinates

        rows = rng.standard_normal((4, 9))
        emb = BaseEmbeddingCoordinates(per_fibre=rows, t=1.0)
        for i in range(4):
            for j in range(4):
                a, b = rows[i], rows[j]
                expect = np.sqrt(max(a @ a + b @ b - 2 * (a @ b), 0.0))
                assert hbdm_distance(emb, i, j) == pytest.approx(expect, abs=1e-12)
                assert hbdm_distance(emb, i, j) == hbdm_distance(emb, j, i)

    def test_missing_offsets_rejected(self):
        spec = SpectralResult(
            eigenvalues=np.array([0.0, 1.0]),
            eigenvectors=np.eye(2),
            residuals=np.zeros(2),
        )
        with pytest.raises(ValueError):
            hbdm_embed(spec, 1.0)
