import numpy as np
import pytest

from latentplc import conceal, framecodec, predictor, simulate, synth, vq


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _train_stack(corpus_seconds, hidden, iterations, seed):
    samples, labels = synth.generate_corpus(corpus_seconds, seed=seed)
    frames = framecodec.frame_signal(samples, pad_to_even=True)
    transform = framecodec.AnalysisTransform.create(16)
    transform.calibrate(frames)
    latents = framecodec.encode_frames(frames, transform)
    rvq, _ = vq.train_rvq(latents, epochs=30, seed=seed + 1)
    distilled, _ = vq.distill_codebook(rvq, latents, epochs=30, seed=seed + 2)
    class_map = conceal.build_class_map(distilled, rvq, latents, labels)
    targets = vq.distillation_targets(rvq, latents)
    dseq = vq.distilled_quantize(targets, distilled)
    seqs = [dseq[i : i + 200] for i in range(0, len(dseq) - 199, 100)]
    _, silence_vec = conceal.silence_codevector(distilled)
    model = predictor.new_model(16, hidden, seed=seed)
    predictor.train_teacher_forcing(
        model, seqs, distilled.vectors, iterations=iterations,
        batch_size=128, lr=1e-3, seed=seed + 3, pad_vector=silence_vec,
    )
    return {
        "transform": transform,
        "rvq": rvq,
        "distilled": distilled,
        "class_map": class_map,
        "model": model,
        "latents": latents,
        "labels": labels,
    }


@pytest.fixture(scope="session")
def speech_stack():
    """Full trained stack on the synthetic corpus; shared across tests."""
    return _train_stack(corpus_seconds=180.0, hidden=128, iterations=12000, seed=7)


@pytest.fixture(scope="session")
def eval_stream(speech_stack):
    """Held-out 30 s signal encoded through the trained stack."""
    samples, labels = synth.generate_corpus(30.0, seed=1234)
    stream = simulate.encode_stream(
        samples,
        speech_stack["transform"],
        speech_stack["rvq"],
        speech_stack["distilled"],
    )
    return {"stream": stream, "labels": labels, "samples": samples}
