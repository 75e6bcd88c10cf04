"""Command-line pipeline: data generation, training, simulation, inspection.

Subcommands write their artifacts under an output directory taken from
--out or the LATENTPLC_OUT environment variable. Exit codes: 0 ok,
1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import (
    bitstream,
    channel,
    conceal,
    config as config_mod,
    framecodec,
    jitterbuffer,
    kernels,
    metrics,
    predictor,
    simulate,
    synth,
    vq,
)

ARTIFACTS = {
    "corpus": "corpus.wav",
    "labels": "labels.csv",
    "transform": "transform.bin",
    "rvq": "rvq.lvq",
    "rvq_loss": "vq_loss.csv",
    "distilled": "distilled.lvqd",
    "distill_loss": "distill_loss.csv",
    "class_map": "class_map.csv",
    "model": "plc_model.bin",
    "plc_loss": "plc_loss.csv",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("LATENTPLC_OUT", "out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_run_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load_config(args.config) if args.config else config_mod.RunConfig()
    for name in ("seed", "fec_offset", "playout_delay_ms", "trace_seed", "ge_preset", "trace_file"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing artifact {path}; run '{produced_by}' first")
    return path


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(str(v) for v in row) + "\n")


def cmd_gen_data(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    samples, labels = synth.generate_corpus(
        cfg.corpus_seconds,
        seed=cfg.seed,
        voiced_frac=cfg.voiced_frac,
        unvoiced_frac=cfg.unvoiced_frac,
        silence_frac=cfg.silence_frac,
    )
    framecodec.write_wav(out / ARTIFACTS["corpus"], samples)
    (out / ARTIFACTS["labels"]).write_text(synth.labels_to_csv(labels), encoding="utf-8")
    print(f"wrote {out / ARTIFACTS['corpus']}: {len(labels)} frames, "
          f"{cfg.corpus_seconds:g} s, seed {cfg.seed}")
    return 0


def _load_corpus(out: Path):
    samples = framecodec.read_wav(_require(out / ARTIFACTS["corpus"], "gen-data"))
    labels = synth.labels_from_csv(
        _require(out / ARTIFACTS["labels"], "gen-data").read_text(encoding="utf-8")
    )
    frames = framecodec.frame_signal(samples, pad_to_even=True)
    if len(labels) < frames.shape[0]:
        labels = labels + [conceal.SILENCE] * (frames.shape[0] - len(labels))
    return frames, labels


def cmd_train_vq(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    frames, _ = _load_corpus(out)
    transform = framecodec.AnalysisTransform.create(cfg.latent_dim)
    transform.calibrate(frames)
    latents = framecodec.encode_frames(frames, transform)
    rvq, curves = vq.train_rvq(
        latents, n_stages=cfg.stages, epochs=cfg.vq_epochs,
        decay=cfg.ema_decay, seed=cfg.seed,
    )
    framecodec.save_transform(out / ARTIFACTS["transform"], transform)
    vq.save_rvq(out / ARTIFACTS["rvq"], rvq)
    rows = [
        (epoch, stage + 1, f"{mse:.9g}")
        for stage, losses in enumerate(curves)
        for epoch, mse in enumerate(losses)
    ]
    _write_csv(out / ARTIFACTS["rvq_loss"], "epoch,stage,mse", rows)
    print("stage distortions: " + ", ".join(f"{c[-1]:.4f}" for c in curves))
    return 0


def cmd_distill(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    frames, labels = _load_corpus(out)
    transform = framecodec.load_transform(_require(out / ARTIFACTS["transform"], "train-vq"))
    rvq = vq.load_rvq(_require(out / ARTIFACTS["rvq"], "train-vq"))
    latents = framecodec.encode_frames(frames, transform)
    distilled, losses = vq.distill_codebook(
        rvq, latents, epochs=cfg.distill_epochs, decay=cfg.ema_decay, seed=cfg.seed + 1
    )
    class_map = conceal.build_class_map(distilled, rvq, latents, labels)
    vq.save_distilled(out / ARTIFACTS["distilled"], distilled)
    (out / ARTIFACTS["class_map"]).write_text(class_map.to_text(), encoding="utf-8")
    _write_csv(
        out / ARTIFACTS["distill_loss"], "epoch,mse",
        [(i, f"{m:.9g}") for i, m in enumerate(losses)],
    )
    print(f"distillation distortion: {losses[-1]:.4f} after {len(losses)} epochs")
    return 0


def cmd_train_plc(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    frames, _ = _load_corpus(out)
    transform = framecodec.load_transform(_require(out / ARTIFACTS["transform"], "train-vq"))
    rvq = vq.load_rvq(_require(out / ARTIFACTS["rvq"], "train-vq"))
    distilled = vq.load_distilled(_require(out / ARTIFACTS["distilled"], "distill"))
    latents = framecodec.encode_frames(frames, transform)
    targets = vq.distillation_targets(rvq, latents)
    dseq = vq.distilled_quantize(targets, distilled)
    # 2 s training sequences (200 frames) with 50% overlap
    seqs = [dseq[i : i + 200] for i in range(0, len(dseq) - 199, 100)]
    if not seqs:
        raise ValueError("corpus too short for 200-frame training sequences")
    _, silence_vec = conceal.silence_codevector(distilled)
    model = predictor.new_model(cfg.latent_dim, cfg.hidden, seed=cfg.seed)
    losses = predictor.train_teacher_forcing(
        model, seqs, distilled.vectors,
        iterations=cfg.plc_iterations, batch_size=cfg.batch_size,
        lr=cfg.learning_rate, seed=cfg.seed + 2, pad_vector=silence_vec,
    )
    predictor.save_model(out / ARTIFACTS["model"], model)
    _write_csv(
        out / ARTIFACTS["plc_loss"], "iteration,mean_nll",
        [(i, f"{v:.9g}") for i, v in enumerate(losses)],
    )
    rep = predictor.complexity_report(model)
    print(f"final NLL {losses[-200:].mean():.4f} (uniform baseline {metrics.LN_256:.4f})")
    print(f"model: {rep.param_count} parameters, {rep.mflops:.1f} MFLOPS at 100 frames/s")
    return 0


def _load_stack(out: Path, cfg: config_mod.RunConfig):
    transform = framecodec.load_transform(_require(out / ARTIFACTS["transform"], "train-vq"))
    rvq = vq.load_rvq(_require(out / ARTIFACTS["rvq"], "train-vq"))
    distilled = vq.load_distilled(_require(out / ARTIFACTS["distilled"], "distill"))
    model = predictor.load_model(_require(out / ARTIFACTS["model"], "train-plc"))
    class_map = conceal.IndexClassMap.from_text(
        _require(out / ARTIFACTS["class_map"], "distill").read_text(encoding="utf-8")
    )
    problems = []
    if transform.dim != cfg.latent_dim:
        problems.append(f"transform dim {transform.dim} != config latent_dim {cfg.latent_dim}")
    if rvq.dim != cfg.latent_dim:
        problems.append(f"quantizer dim {rvq.dim} != config latent_dim {cfg.latent_dim}")
    if rvq.n_stages != cfg.stages:
        problems.append(f"quantizer stages {rvq.n_stages} != config stages {cfg.stages}")
    if distilled.dim != rvq.dim:
        problems.append(f"distilled dim {distilled.dim} != quantizer dim {rvq.dim}")
    if model.dim != rvq.dim:
        problems.append(f"model dim {model.dim} != quantizer dim {rvq.dim}")
    if model.hidden != cfg.hidden:
        problems.append(f"model hidden {model.hidden} != config hidden {cfg.hidden}")
    if problems:
        raise ValueError("artifact mismatch: " + "; ".join(problems))
    return transform, rvq, distilled, model, class_map


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    transform, rvq, distilled, model, class_map = _load_stack(out, cfg)
    jitterbuffer.check_fec_headroom(cfg.playout_delay_ms, cfg.fec_offset)

    wav_path = Path(args.wav) if args.wav else out / ARTIFACTS["corpus"]
    signal = framecodec.read_wav(_require(wav_path, "gen-data"))
    stream = simulate.encode_stream(signal, transform, rvq, distilled)
    n_packets = len(stream.indices) // 2

    if cfg.trace_file:
        events = channel.parse_trace(Path(cfg.trace_file).read_text(encoding="utf-8"))
        if len(events) < n_packets:
            raise ValueError(
                f"trace has {len(events)} events but the stream needs {n_packets} packets"
            )
        events = events[:n_packets]
    else:
        if cfg.ge_preset not in channel.PRESETS:
            raise ValueError(
                f"unknown preset {cfg.ge_preset!r}; choose from {sorted(channel.PRESETS)}"
            )
        events = channel.generate_trace(
            channel.PRESETS[cfg.ge_preset], n_packets, seed=cfg.trace_seed
        )

    packets = bitstream.attach_redundancy(stream.indices, cfg.fec_offset)
    (out / "packets.bin").write_bytes(bitstream.pack_stream(packets))

    fingerprint = cfg.fingerprint()
    complexity = asdict(predictor.complexity_report(model))
    results = simulate.run_all_conditions(
        stream, events, transform, rvq, distilled, model, class_map,
        fec_offset=cfg.fec_offset, playout_delay_ms=cfg.playout_delay_ms,
    )
    for cond, res in results.items():
        report = metrics.assemble_report(
            condition=cond,
            config_fingerprint=fingerprint,
            reference=stream.reference,
            decoded=res.decoded,
            stats=res.stats,
            kinds=res.kinds,
            prediction=res.prediction,
            fec_offset=cfg.fec_offset if cond == "plc_fec" else 0,
            complexity=complexity if cond != "zero_fill" else None,
            extra={"kernel_backend": kernels.BACKEND},
        )
        (out / f"report_{cond}.json").write_text(report.to_json(), encoding="utf-8")
        log_outcomes = [
            jitterbuffer.FrameOutcome(oc.frame_n, kind, oc.stage_indices,
                                      oc.distilled_index, oc.source_seq)
            for oc, kind in zip(res.outcomes, res.kinds)
        ]
        (out / f"outcomes_{cond}.csv").write_text(
            jitterbuffer.outcomes_to_csv(log_outcomes), encoding="utf-8"
        )
        if res.records is not None:
            (out / f"conceal_{cond}.csv").write_text(
                conceal.records_to_csv(res.records), encoding="utf-8"
            )
        framecodec.write_wav(out / f"decoded_{cond}.wav", res.decoded)
        print(f"{cond}: overall SNR {report.overall_snr_db:.2f} dB, "
              f"outcomes {report.outcome_counts}")
    return 0


def cmd_inspect_packet(args) -> int:
    data = Path(args.file).read_bytes()
    packets = bitstream.unpack_stream(data)
    if args.seq is None:
        for p in packets:
            print(bitstream.dump_packet(p))
        return 0
    for p in packets:
        if p.seq == args.seq:
            print(bitstream.dump_packet(p))
            return 0
    raise ValueError(f"seq {args.seq} not found in {args.file} ({len(packets)} packets)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentplc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (default $LATENTPLC_OUT or ./out)")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override config seed")

    p = sub.add_parser("gen-data", help="generate the labeled synthetic corpus")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-vq", help="train the residual quantizer stages")
    common(p)
    p.set_defaults(func=cmd_train_vq)

    p = sub.add_parser("distill", help="train the distilled codebook and class map")
    common(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("train-plc", help="train the index predictor")
    common(p)
    p.set_defaults(func=cmd_train_plc)

    p = sub.add_parser("simulate", help="run the three-condition loss simulation")
    common(p)
    p.add_argument("--wav", help="input signal (default: the generated corpus)")
    p.add_argument("--trace-file", dest="trace_file", help="delay-loss trace file")
    p.add_argument("--ge-preset", dest="ge_preset",
                   help=f"channel preset: {', '.join(sorted(channel.PRESETS))}")
    p.add_argument("--trace-seed", dest="trace_seed", type=int, help="channel seed")
    p.add_argument("--fec-offset", dest="fec_offset", type=int, help="FEC offset k in frames")
    p.add_argument("--playout-delay-ms", dest="playout_delay_ms", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect-packet", help="dump packets from a packed stream file")
    p.add_argument("file")
    p.add_argument("--seq", type=int, help="dump only this sequence number")
    p.set_defaults(func=cmd_inspect_packet)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # runtime failures exit 2
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
