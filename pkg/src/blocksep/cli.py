"""Command-line interface: separate / eval / sweep / synth."""

import csv
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace

import click
import numpy as np

from . import audio_io, metrics, online, synth, timefreq
from .config import SeparationConfig, SourceConfig
from .exceptions import BlocksepError
from .offline import offline_fit
from .separate import wiener_separate

EVAL_HEADER = ["mixture", "source", "sdr", "sir", "isr", "sar"]


def _load_config(config_path, n_sources=None):
    if config_path:
        cfg = SeparationConfig.from_json(config_path)
    else:
        n = n_sources or 2
        cfg = SeparationConfig(sources=[SourceConfig() for _ in range(n)])
    return cfg


def _apply_overrides(cfg, mode, alpha, block, iters, seed):
    if mode is not None:
        cfg.mode = mode
    if alpha is not None:
        cfg.alpha = alpha
    if block is not None:
        cfg.block = block
    if iters is not None:
        if cfg.mode == "online":
            cfg.iters_per_block = iters
        else:
            cfg.iterations = iters
    if seed is not None:
        cfg.seed = seed
    return cfg


def _atomic_write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path, header, rows):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


@click.group()
def main():
    """Online/offline multichannel audio source separation."""


@main.command("separate")
@click.option("--input", "input_path", required=True, type=str)
@click.option("--config", "config_path", type=str, default=None)
@click.option("--mode", type=click.Choice(["offline", "online"]), default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--block", type=int, default=None)
@click.option("--iters", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", default=".", type=str)
def cli_separate(input_path, config_path, mode, alpha, block, iters, seed,
                 out_dir):
    """Separate a mixture WAV into one WAV per modeled source."""
    try:
        audio = audio_io.read_wav(input_path)
    except FileNotFoundError as exc:
        click.echo(str(exc), err=True)
        sys.exit(2)
    try:
        cfg = _load_config(config_path)
        _apply_overrides(cfg, mode, alpha, block, iters, seed)
        cfg.validate()
        os.makedirs(out_dir, exist_ok=True)
        mixture_tf = timefreq.stft(audio, cfg.window_len)
        report = {"mode": cfg.mode, "seed": cfg.seed, "input": input_path}
        if cfg.mode == "offline":
            model, loglik = offline_fit(mixture_tf, cfg, cfg.seed)
            images = wiener_separate(mixture_tf, model)
            report["log_likelihood"] = list(loglik)
        else:
            frames = [mixture_tf.values[:, n, :]
                      for n in range(mixture_tf.n_frames)]
            state = online.online_init(cfg, frames[0], cfg.seed,
                                       sample_rate=audio.sample_rate)
            per_step = [online.process_block(state)]
            for frame in frames[1:]:
                per_step.append(online.online_step(state, frame))
            images = [
                timefreq.TFTensor(
                    np.stack([step[j] for step in per_step], axis=1),
                    cfg.window_len, audio.sample_rate)
                for j in range(cfg.n_sources)
            ]
            report["step_seconds"] = list(state.step_times)
        paths = []
        for j, image_tf in enumerate(images):
            image = timefreq.istft(image_tf, audio.n_samples)
            out_path = os.path.join(out_dir, f"source_{j}.wav")
            audio_io.write_wav(out_path, image)
            paths.append(out_path)
        report["outputs"] = paths
        _atomic_write_text(os.path.join(out_dir, "report.json"),
                           json.dumps(report, indent=2) + "\n")
        click.echo(f"wrote {len(paths)} sources to {out_dir}")
    except BlocksepError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@main.command("eval")
@click.option("--est", "est_paths", multiple=True, required=True, type=str)
@click.option("--ref", "ref_paths", multiple=True, required=True, type=str)
@click.option("--mixture-id", default="0", type=str)
@click.option("--filt-len", default=metrics.DEFAULT_FILTER_LEN, type=int)
@click.option("--out", "out_path", default="scores.csv", type=str)
def cli_eval(est_paths, ref_paths, mixture_id, filt_len, out_path):
    """Score estimated source images against references, writing a CSV."""
    if len(est_paths) != len(ref_paths):
        click.echo("error: need as many --est as --ref", err=True)
        sys.exit(1)
    try:
        ests = [audio_io.read_wav(p) for p in est_paths]
        refs = [audio_io.read_wav(p) for p in ref_paths]
    except FileNotFoundError as exc:
        click.echo(str(exc), err=True)
        sys.exit(2)
    for est, ref, ep, rp in zip(ests, refs, est_paths, ref_paths):
        if est.samples.shape != ref.samples.shape:
            click.echo(f"error: length/channel mismatch between {ep} and {rp}",
                       err=True)
            sys.exit(1)
    try:
        scores = metrics.bss_eval_images(ests, refs, filt_len=filt_len)
    except BlocksepError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    rows = [
        [mixture_id, j, scores.sdr[j], scores.sir[j], scores.isr[j],
         scores.sar[j]]
        for j in range(len(est_paths))
    ]
    mean = metrics.average_scores([scores])
    rows.append([mixture_id, "mean", mean.sdr[0], mean.sir[0], mean.isr[0],
                 mean.sar[0]])
    _write_csv(out_path, EVAL_HEADER, rows)
    click.echo(f"wrote {out_path}")


@main.command("synth")
@click.option("--spec", "spec_path", type=str, default=None)
@click.option("--out-dir", default="corpus", type=str)
@click.option("--seed", type=int, default=None)
def cli_synth(spec_path, out_dir, seed):
    """Render the synthetic corpus (WAV files + manifest)."""
    try:
        specs = load_synth_specs(spec_path, seed)
        manifest = synth.write_corpus(specs, out_dir)
    except BlocksepError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except FileNotFoundError as exc:
        click.echo(str(exc), err=True)
        sys.exit(2)
    click.echo(f"wrote corpus manifest {manifest}")


def load_synth_specs(spec_path, seed=None):
    if spec_path is None:
        return default_corpus_specs(seed=0 if seed is None else seed)
    if not os.path.exists(spec_path):
        raise FileNotFoundError(f"spec file not found: {spec_path}")
    with open(spec_path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BlocksepError(
                f"{spec_path}:{exc.lineno}: {exc.msg}") from exc
    entries = data["mixtures"] if isinstance(data, dict) else data
    specs = [synth.SynthSpec(**entry) for entry in entries]
    if seed is not None:
        specs = [replace(s, seed=seed + i) for i, s in enumerate(specs)]
    return specs


def default_corpus_specs(n_mixtures=5, duration=10.0, sample_rate=16000,
                         seed=0):
    """Desk-scale stand-in corpus: stereo mixtures of a harmonic source, a
    percussion source, and a bass source at distinct azimuths."""
    specs = []
    for m in range(n_mixtures):
        specs.append(synth.SynthSpec(
            sources=[
                synth.SynthSourceSpec("harmonic-tone-sequence", azimuth=-30.0),
                synth.SynthSourceSpec("filtered-noise-percussion",
                                      azimuth=30.0),
                synth.SynthSourceSpec("bass-line", azimuth=0.0),
            ],
            duration=duration, sample_rate=sample_rate, seed=seed + m))
    return specs


def _read_manifest(manifest_path):
    base = os.path.dirname(os.path.abspath(manifest_path))
    mixtures = {}
    with open(manifest_path, newline="") as fh:
        for row in csv.DictReader(fh):
            entry = mixtures.setdefault(row["mixture"],
                                        {"mixture": None, "images": []})
            path = os.path.join(base, row["path"])
            if row["role"] == "mixture":
                entry["mixture"] = path
            else:
                entry["images"].append((int(row["source"]), path))
    for entry in mixtures.values():
        entry["images"] = [p for _, p in sorted(entry["images"])]
    return mixtures


def run_sweep_cell(job):
    """One (alpha, block, iters) x mixture separation + evaluation job.
    Top-level so it can run in a worker process."""
    (alpha, block, iters, mixture_id, mixture_path, image_paths,
     base_cfg_dict, filt_len) = job
    cfg = SeparationConfig(**base_cfg_dict)
    cfg.mode = "online"
    cfg.alpha = alpha
    cfg.block = block
    cfg.iters_per_block = iters
    if len(cfg.sources) != len(image_paths):
        cfg.sources = [SourceConfig() for _ in image_paths]
    cfg.validate()
    audio = audio_io.read_wav(mixture_path)
    refs = [audio_io.read_wav(p) for p in image_paths]
    mixture_tf = timefreq.stft(audio, cfg.window_len)
    images_tf = online.online_separate(mixture_tf, cfg, cfg.seed)
    ests = [timefreq.istft(tf, audio.n_samples) for tf in images_tf]
    scores = metrics.bss_eval_images(ests, refs, filt_len=filt_len)
    return [
        (alpha, block, iters, mixture_id, j,
         scores.sdr[j], scores.sir[j], scores.isr[j], scores.sar[j])
        for j in range(len(refs))
    ]


@main.command("sweep")
@click.option("--manifest", "manifest_path", required=True, type=str)
@click.option("--alpha", "alphas", multiple=True, type=float)
@click.option("--block", "blocks", multiple=True, type=int)
@click.option("--iters", "iters_list", multiple=True, type=int)
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--filt-len", default=16, type=int)
@click.option("--out-dir", default="sweep", type=str)
@click.option("--workers", default=1, type=int)
def cli_sweep(manifest_path, alphas, blocks, iters_list, config_path, seed,
              filt_len, out_dir, workers):
    """Grid of (alpha, block, iters) online runs over a corpus manifest,
    producing a long-format detail CSV and a mean-SDR summary."""
    if not alphas or not blocks or not iters_list:
        click.echo("usage error: provide at least one --alpha, --block and "
                   "--iters", err=True)
        sys.exit(2)
    if not os.path.exists(manifest_path):
        click.echo(f"manifest not found: {manifest_path}", err=True)
        sys.exit(2)
    mixtures = _read_manifest(manifest_path)
    cfg = _load_config(config_path)
    if seed is not None:
        cfg.seed = seed
    base_cfg = asdict(cfg)
    jobs = []
    for (alpha, block, iters), (mid, entry) in itertools.product(
            itertools.product(alphas, blocks, iters_list),
            sorted(mixtures.items())):
        jobs.append((alpha, block, iters, mid, entry["mixture"],
                     entry["images"], base_cfg, filt_len))
    detail = []
    failures = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_cell, jobs))
    else:
        results = [_safe_cell(job) for job in jobs]
    for job, (rows, error) in zip(jobs, results):
        if error is not None:
            failures.append((job[:4], error))
        else:
            detail.extend(rows)
    detail.sort(key=lambda r: tuple(str(v) for v in r[:5]))
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "detail.csv"),
               ["alpha", "block", "iters", "mixture", "source",
                "sdr", "sir", "isr", "sar"], detail)
    summary = {}
    for row in detail:
        summary.setdefault(row[:3], []).append(row[5])
    summary_rows = [
        (alpha, block, iters, float(np.mean(sdrs)))
        for (alpha, block, iters), sdrs in sorted(summary.items())
    ]
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["alpha", "block", "iters", "mean_sdr"], summary_rows)
    for cell, error in failures:
        click.echo(f"cell {cell} failed: {error}", err=True)
    click.echo(f"wrote {out_dir}/detail.csv and {out_dir}/summary.csv")
    if failures:
        sys.exit(1)


def _safe_cell(job):
    try:
        return run_sweep_cell(job), None
    except Exception as exc:  # noqa: BLE001 - cell failures are reported
        return None, f"{type(exc).__name__}: {exc}"


if __name__ == "__main__":
    main()
