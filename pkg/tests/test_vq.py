import numpy as np
import pytest

from latentplc import vq


def random_codebook(rng, dim=8, label=""):
    return vq.Codebook(rng.normal(size=(256, dim)), label=label)


def random_rvq(rng, dim=8, stages=4):
    return vq.ResidualVQ([random_codebook(rng, dim, f"stage{s}") for s in range(stages)])


# ---- quantize_stage


def test_quantize_exact_row_match(rng):
    cb = random_codebook(rng)
    idx, vec = vq.quantize_stage(cb.vectors[7].copy(), cb)
    assert idx == 7
    assert np.array_equal(vec, cb.vectors[7])


def test_quantize_zero_latent_zero_row(rng):
    cb = random_codebook(rng)
    cb.vectors[0] = 0.0
    idx, vec = vq.quantize_stage(np.zeros(8), cb)
    assert idx == 0
    assert np.array_equal(vec, np.zeros(8))


def test_quantize_matches_exhaustive_scan(rng):
    cb = random_codebook(rng, dim=4)
    for _ in range(50):
        latent = rng.normal(size=4)
        dists = np.sum((cb.vectors - latent) ** 2, axis=1)
        idx, _ = vq.quantize_stage(latent, cb)
        assert idx == int(np.argmin(dists))


def test_quantize_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        vq.quantize_stage(np.zeros(5), random_codebook(rng, dim=8))


# ---- rvq encode/decode


def test_encode_constructed_decomposition(rng):
    # coarse stage 1, fine stage 2, zero rows in stages 3/4: the sum of
    # row a and row b decomposes exactly and encodes as (a, b, 0, 0)
    stages = [
        vq.Codebook(rng.normal(size=(256, 8)) * 10.0),
        vq.Codebook(rng.normal(size=(256, 8)) * 0.1),
        vq.Codebook(np.vstack([np.zeros((1, 8)), rng.normal(size=(255, 8))])),
        vq.Codebook(np.vstack([np.zeros((1, 8)), rng.normal(size=(255, 8))])),
    ]
    rvq = vq.ResidualVQ(stages)
    a, b = 17, 201
    latent = stages[0].vectors[a] + stages[1].vectors[b]
    idx = vq.rvq_encode(latent, rvq)
    assert idx[:2] == [a, b]
    assert np.array_equal(vq.rvq_decode(idx, rvq), latent)


def test_prefix_property(rng):
    rvq = random_rvq(rng)
    latent = rng.normal(size=8)
    full = vq.rvq_encode(latent, rvq, 4)
    for n in (1, 2, 3):
        assert vq.rvq_encode(latent, rvq, n) == full[:n]


def test_reconstruction_error_non_increasing(rng):
    rvq = random_rvq(rng)
    latents = rng.normal(size=(1000, 8))
    mses = []
    for n in (1, 2, 3, 4):
        idx = vq.rvq_encode_batch(latents, rvq, n)
        rec = vq.rvq_decode_batch(idx, rvq)
        mses.append(np.mean(np.sum((latents - rec) ** 2, axis=1)))
    assert all(mses[i] >= mses[i + 1] for i in range(3))


def test_decode_zero_rows(rng):
    rvq = random_rvq(rng, stages=2)
    rvq.stages[0].vectors[5] = 0.0
    rvq.stages[1].vectors[9] = 0.0
    assert np.array_equal(vq.rvq_decode([5, 9], rvq), np.zeros(8))


def test_decode_beats_stage1_only_on_average(rng):
    rvq = random_rvq(rng)
    latents = rng.normal(size=(500, 8))
    full = vq.rvq_decode_batch(vq.rvq_encode_batch(latents, rvq), rvq)
    one = vq.rvq_decode_batch(vq.rvq_encode_batch(latents, rvq, 1), rvq)
    assert np.mean(np.sum((latents - full) ** 2, axis=1)) <= np.mean(
        np.sum((latents - one) ** 2, axis=1)
    )


def test_refinement_pointwise_with_zero_rows(rng):
    # a zero row in every later stage makes refinement non-increasing
    # for every single latent, since skipping is always an option
    stages = [vq.Codebook(rng.normal(size=(256, 8)))]
    for _ in range(3):
        rows = rng.normal(size=(256, 8))
        rows[0] = 0.0
        stages.append(vq.Codebook(rows))
    rvq = vq.ResidualVQ(stages)
    for x in rng.normal(size=(200, 8)):
        errs = []
        for n in (1, 2, 3, 4):
            rec = vq.rvq_decode(vq.rvq_encode(x, rvq, n), rvq)
            errs.append(float(np.sum((x - rec) ** 2)))
        assert all(errs[i] >= errs[i + 1] - 1e-12 for i in range(3))


def test_encode_decode_encode_idempotent_single_stage(rng):
    # a code-vector re-encodes to itself, so the single-stage round trip
    # is an exact fixed point; greedy multi-stage encoding is not a
    # projection and carries no such guarantee
    rvq = random_rvq(rng)
    latents = rng.normal(size=(1000, 8))
    idx = vq.rvq_encode_batch(latents, rvq, 1)
    recon = vq.rvq_decode_batch(idx, rvq)
    idx2 = vq.rvq_encode_batch(recon, rvq, 1)
    assert np.array_equal(idx, idx2)


def test_decode_index_out_of_range(rng):
    with pytest.raises(ValueError):
        vq.rvq_decode([0, 300], random_rvq(rng))


def test_encode_n_stages_out_of_range(rng):
    rvq = random_rvq(rng, stages=2)
    with pytest.raises(ValueError):
        vq.rvq_encode(np.zeros(8), rvq, 3)


def test_stage_bitrate_accounting():
    # 4 stages x 8 bits per 10 ms frame
    bits_per_frame = 4 * 8
    assert bits_per_frame * 100 == 3200  # 3.2 kbps primary
    assert 8 * 100 == 800  # 0.8 kbps per single codebook


# ---- EMA updates


def test_ema_only_assigned_row_changes(rng):
    cb = random_codebook(rng)
    state = vq.EmaState.for_codebook(cb, decay=0.99)
    before = cb.vectors.copy()
    batch = rng.normal(size=(32, 8))
    assignments = np.full(32, 3)
    n_reseeded = vq.ema_update(state, cb, batch, assignments, rng)
    assert n_reseeded == 0
    # other rows are recomputed as (0.99 s)/(0.99 c) and may move by ulps
    moved = np.max(np.abs(cb.vectors - before), axis=1)
    assert moved[3] > 1e-3
    assert np.all(moved[np.arange(256) != 3] < 1e-12)


def test_ema_fixed_point(rng):
    cb = random_codebook(rng)
    state = vq.EmaState.for_codebook(cb)
    row = cb.vectors[10].copy()
    batch = np.tile(row, (16, 1))
    vq.ema_update(state, cb, batch, np.full(16, 10), rng)
    assert np.allclose(cb.vectors[10], row, atol=1e-4)


def test_ema_consistency_invariant(rng):
    cb = random_codebook(rng)
    state = vq.EmaState.for_codebook(cb)
    for _ in range(5):
        batch = rng.normal(size=(400, 8))
        idx = vq.quantize_batch(batch, cb)
        vq.ema_update(state, cb, batch, idx, rng)
        expected = state.cluster_sum / np.maximum(state.cluster_size, vq.EMA_EPS)[:, None]
        assert np.array_equal(cb.vectors, expected)


def test_ema_empty_batch_rejected(rng):
    cb = random_codebook(rng)
    state = vq.EmaState.for_codebook(cb)
    with pytest.raises(ValueError):
        vq.ema_update(state, cb, np.zeros((0, 8)), np.zeros(0, dtype=int), rng)


def test_training_close_to_kmeans_oracle(rng):
    # 256 well-separated Gaussian clusters; EMA training should land
    # within 10% of a converged k-means run on the same data
    sklearn = pytest.importorskip("sklearn.cluster")
    centers = rng.normal(size=(256, 8)) * 10.0
    data = np.repeat(centers, 40, axis=0) + rng.normal(size=(256 * 40, 8)) * 0.1
    perm = rng.permutation(len(data))
    data = data[perm]
    cb, _, losses = vq.train_codebook(data, epochs=40, decay=0.99, rng=np.random.default_rng(0))
    assert losses[-1] <= losses[0]
    km = sklearn.KMeans(n_clusters=256, n_init=1, max_iter=500, tol=1e-12, random_state=0)
    km.fit(data)
    oracle = km.inertia_ / len(data)
    assert losses[-1] <= 1.1 * oracle


# ---- distillation


def test_distill_separable_clusters(rng):
    # corpus whose two-stage sums take exactly 256 distinct values
    rvq = random_rvq(rng, stages=2)
    pairs = [(i, (i * 7) % 256) for i in range(256)]
    sums = np.array([rvq.stages[0].vectors[a] + rvq.stages[1].vectors[b] for a, b in pairs])
    corpus = np.repeat(sums, 4, axis=0)
    distilled, losses = vq.distill_codebook(rvq, corpus, epochs=20, seed=0)
    targets = vq.distillation_targets(rvq, corpus)
    idx = vq.distilled_quantize(targets, distilled)
    mse = np.mean(np.sum((targets - distilled.vectors[idx]) ** 2, axis=1))
    assert mse < 1e-9


def test_distill_corpus_too_small(rng):
    rvq = random_rvq(rng)
    with pytest.raises(ValueError):
        vq.distill_codebook(rvq, rng.normal(size=(100, 8)))


def test_distill_requires_two_stages(rng):
    rvq = random_rvq(rng, stages=1)
    with pytest.raises(ValueError):
        vq.distill_codebook(rvq, rng.normal(size=(500, 8)))


def test_distill_dominance_on_speech_corpus(speech_stack):
    # held-out latents from the training distribution: the distilled
    # codebook represents its two-stage targets at least as well as
    # stage 1 represents the raw latents
    from latentplc import framecodec, synth

    samples, _ = synth.generate_corpus(20.0, seed=555)
    frames = framecodec.frame_signal(samples, pad_to_even=True)
    held = framecodec.encode_frames(frames, speech_stack["transform"])
    rvq = speech_stack["rvq"]
    distilled = speech_stack["distilled"]
    idx1 = vq.rvq_encode_batch(held, rvq, 1)
    stage1_mse = np.mean(np.sum((held - rvq.stages[0].vectors[idx1[:, 0]]) ** 2, axis=1))
    targets = vq.distillation_targets(rvq, held)
    didx = vq.distilled_quantize(targets, distilled)
    distilled_mse = np.mean(np.sum((targets - distilled.vectors[didx]) ** 2, axis=1))
    assert distilled_mse <= stage1_mse


def test_training_determinism(rng):
    data = rng.normal(size=(2000, 8))
    rvq_a, _ = vq.train_rvq(data, epochs=10, seed=42)
    rvq_b, _ = vq.train_rvq(data, epochs=10, seed=42)
    for sa, sb in zip(rvq_a.stages, rvq_b.stages):
        assert np.array_equal(sa.vectors, sb.vectors)


# ---- file format


def test_rvq_file_roundtrip(tmp_path, rng):
    rvq = random_rvq(rng, dim=6)
    path = tmp_path / "cb.lvq"
    vq.save_rvq(path, rvq)
    loaded = vq.load_rvq(path)
    assert loaded.n_stages == 4 and loaded.dim == 6
    for orig, new in zip(rvq.stages, loaded.stages):
        assert np.allclose(orig.vectors, new.vectors, atol=1e-6)
    # f32 storage round-trips exactly on reload
    vq.save_rvq(path, loaded)
    again = vq.load_rvq(path)
    for a, b in zip(loaded.stages, again.stages):
        assert np.array_equal(a.vectors, b.vectors)


def test_distilled_file_roundtrip(tmp_path, rng):
    distilled = vq.DistilledCodebook(rng.normal(size=(256, 6)))
    path = tmp_path / "d.lvqd"
    vq.save_distilled(path, distilled)
    loaded = vq.load_distilled(path)
    assert np.allclose(distilled.vectors, loaded.vectors, atol=1e-6)


def test_container_magic_mismatch(tmp_path, rng):
    path = tmp_path / "cb.lvq"
    vq.save_rvq(path, random_rvq(rng))
    with pytest.raises(ValueError, match="magic"):
        vq.load_distilled(path)


def test_codebook_validation(rng):
    with pytest.raises(ValueError):
        vq.Codebook(np.zeros((100, 8)))
    bad = np.zeros((256, 8))
    bad[3, 3] = np.nan
    with pytest.raises(ValueError):
        vq.Codebook(bad)
