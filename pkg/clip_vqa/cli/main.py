import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, NoReturn, Optional

import numpy as np
import typer
from rich.console import Console
from rich.markup import escape

try:  # typer>=0.26 vendors click and raises its own exception classes
    from typer._click import exceptions as click_exceptions
except ImportError:
    from click import exceptions as click_exceptions

from clip_vqa.config import CHECKPOINT_PATH, DATA_DIR, configure_logging
from clip_vqa.exceptions import ClipVQAError, ConfigurationError, UsageError
from clip_vqa.frames import FrameTensorFile, clip_patches, read_frames, read_manifest
from clip_vqa.gradcheck import DEFAULT_TOLERANCE, grad_check
from clip_vqa.inference import Predictor, evaluate_checkpoint
from clip_vqa.models import (
    EvalReport,
    SyntheticSpec,
    TrainConfig,
    load_config,
    override_config,
    preset_config,
)
from clip_vqa.network import ClipVQA
from clip_vqa.quality import ReferenceRatings, encode_mos, vr_loss
from clip_vqa.rng import RngState
from clip_vqa.synthetic import generate_synthetic
from clip_vqa.training import train as run_training

# Create Typer app
app = typer.Typer(
    name="clipvqa",
    help="Train, evaluate and serve CLIP-style video quality models",
    add_completion=False,
)

# Reports go to stdout; status and errors to stderr
console = Console()
err_console = Console(stderr=True)


@dataclass
class Settings:
    config_path: Optional[Path]
    preset: str
    seed: Optional[int]
    out: Path

    def config(self, **overrides) -> TrainConfig:
        if self.config_path is not None:
            config = load_config(self.config_path)
        else:
            config = preset_config(self.preset)
        return override_config(config, seed=self.seed, **overrides)


def fail(exc: Exception) -> NoReturn:
    """Print a one-line error and exit 1 for misuse, 2 for runtime failures."""
    code = 1 if isinstance(exc, (UsageError, ConfigurationError)) else 2
    err_console.print(f"❌ [red]Error: {escape(str(exc))}[/red]")
    raise typer.Exit(code=code) from None


def print_report(report: EvalReport) -> None:
    console.print_json(report.model_dump_json(exclude={"pairs"}))
    for warning in report.warnings:
        err_console.print(f"⚠️  [yellow]{warning}[/yellow]")


def write_pairs_csv(path: Path, report: EvalReport) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "pred", "label"])
        for pair in report.pairs:
            writer.writerow([pair.id, repr(pair.pred), repr(pair.label)])


@app.callback()
def cli(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(
        None, "--config", "-c", help="JSON run configuration"
    ),
    preset: str = typer.Option("toy", "--preset", help="Named configuration preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the run seed"),
    out: Path = typer.Option(Path(DATA_DIR), "--out", help="Output directory"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Logging level"),
):
    configure_logging(log_level)
    ctx.obj = Settings(config, preset, seed, out)


@app.command("gen-data")
def gen_data(
    ctx: typer.Context,
    count: int = typer.Option(200, "--count", "-n", help="Number of videos"),
    frames: int = typer.Option(16, "--frames", help="Frames per video"),
    height: int = typer.Option(24, "--height", help="Frame height"),
    width: int = typer.Option(24, "--width", help="Frame width"),
):
    """Generate a synthetic dataset with known distortions and MOS."""
    settings: Settings = ctx.obj
    try:
        spec = SyntheticSpec(
            count=count,
            frames=frames,
            H=height,
            W=width,
            **({"seed": settings.seed} if settings.seed is not None else {}),
        )
        manifest = generate_synthetic(spec, settings.out)
    except ClipVQAError as e:
        fail(e)
    except ValueError as e:
        fail(UsageError(str(e)))
    err_console.print(f"✅ [green]Wrote {count} videos[/green]")
    console.print_json(data={"manifest": str(manifest), "count": count})


@app.command()
def train(
    ctx: typer.Context,
    manifest: Path = typer.Option(..., "--manifest", "-m", help="Training manifest"),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Override epochs"),
    quality_language: Optional[str] = typer.Option(
        None, "--quality-language", help="long or short descriptions"
    ),
    loss: Optional[str] = typer.Option(None, "--loss", help="vr or cross_entropy"),
    fusion_tokens: Optional[bool] = typer.Option(
        None, "--fusion-tokens/--no-fusion-tokens", help="Aggressive fusion tokens"
    ),
    sat: Optional[bool] = typer.Option(None, "--sat/--no-sat", help="SAT aggregation"),
    vat: Optional[bool] = typer.Option(None, "--vat/--no-vat", help="VAT aggregation"),
):
    """Train a model on the manifest's training split."""
    settings: Settings = ctx.obj
    try:
        config = settings.config(
            epochs=epochs,
            quality_language=quality_language,
            loss=loss,
            use_fusion_tokens=fusion_tokens,
            use_sat=sat,
            use_vat=vat,
        )
        summary = run_training(config, manifest, settings.out)
    except (ClipVQAError, OSError) as e:
        fail(e)
    err_console.print(
        f"✅ [green]Best SROCC {summary.best_srocc:.4f} at epoch "
        f"{summary.best_epoch}[/green]"
    )
    console.print_json(summary.model_dump_json(exclude={"history"}))


@app.command("eval")
def evaluate(
    checkpoint: Optional[Path] = typer.Option(
        None, "--checkpoint", help="Trained checkpoint (default: CLIPVQA_CHECKPOINT)"
    ),
    manifest: Optional[Path] = typer.Option(None, "--manifest", "-m", help="Manifest"),
    split: str = typer.Option("test", "--split", help="test or all"),
    views: Optional[int] = typer.Option(None, "--views", help="Spatial test views"),
    decode: Optional[str] = typer.Option(
        None, "--decode", help="expected_value or svr"
    ),
    csv_path: Optional[Path] = typer.Option(
        None, "--csv", help="Write id,pred,label rows here"
    ),
):
    """Report SROCC and PLCC of a checkpoint."""
    try:
        checkpoint = checkpoint or (Path(CHECKPOINT_PATH) if CHECKPOINT_PATH else None)
        if checkpoint is None:
            raise UsageError("eval needs --checkpoint")
        if manifest is None:
            raise UsageError("eval needs --manifest")
        report = evaluate_checkpoint(checkpoint, manifest, split, views, decode)
        if csv_path is not None:
            write_pairs_csv(csv_path, report)
    except (ClipVQAError, OSError) as e:
        fail(e)
    print_report(report)


@app.command()
def predict(
    frames: Optional[List[Path]] = typer.Argument(None, help="FTB1 frame files"),
    checkpoint: Optional[Path] = typer.Option(
        None, "--checkpoint", help="Trained checkpoint (default: CLIPVQA_CHECKPOINT)"
    ),
    manifest: Optional[Path] = typer.Option(None, "--manifest", "-m", help="Manifest"),
    views: Optional[int] = typer.Option(None, "--views", help="Spatial test views"),
    decode: Optional[str] = typer.Option(
        None, "--decode", help="expected_value or svr"
    ),
    output: Optional[Path] = typer.Option(
        None, "--output", "-o", help="JSON-lines file (default: stdout)"
    ),
):
    """Predict quality distributions and scores as JSON lines."""
    try:
        checkpoint = checkpoint or (Path(CHECKPOINT_PATH) if CHECKPOINT_PATH else None)
        if checkpoint is None:
            raise UsageError("predict needs --checkpoint")
        inputs = [(path.stem, path) for path in frames or []]
        if manifest is not None:
            inputs += [(s.id, s.frames_path) for s in read_manifest(manifest)]
        if not inputs:
            raise UsageError("predict needs frame files or --manifest")
        predictor = Predictor.from_checkpoint(checkpoint)
        lines = [
            predictor.predict(
                read_frames(path), video_id, views, decode
            ).model_dump_json()
            for video_id, path in inputs
        ]
        if output is not None:
            output.parent.mkdir(parents=True, exist_ok=True)
            output.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except (ClipVQAError, OSError) as e:
        fail(e)
    if output is None:
        for line in lines:
            typer.echo(line)
    else:
        err_console.print(
            f"✅ [green]Wrote {len(lines)} predictions to {output}[/green]"
        )


@app.command()
def gradcheck(
    ctx: typer.Context,
    max_entries: Optional[int] = typer.Option(
        8, "--max-entries", help="Entries probed per parameter (0 = all)"
    ),
    tolerance: float = typer.Option(DEFAULT_TOLERANCE, "--tolerance"),
):
    """Compare end-to-end VR-loss gradients with central differences."""
    settings: Settings = ctx.obj
    try:
        config = settings.config()
        rng = RngState(config.seed, "gradcheck")
        model = ClipVQA(config, rng.child("init"))
        shape = (
            config.num_frames * config.stride,
            config.crop_height,
            config.crop_width,
            3,
        )
        frames = rng.child("frames").generator().integers(0, 256, size=shape)
        patches = clip_patches(
            FrameTensorFile(frames.astype(np.uint8)),
            config.num_frames,
            config.stride,
            config.crop_height,
            config.crop_width,
            config.patch_size,
        )
        ratings = ReferenceRatings(config.min_score, config.max_score, config.grades)
        score = float(rng.child("score").generator().uniform(ratings.low, ratings.high))
        target = encode_mos(score, ratings)
        report = grad_check(
            lambda: vr_loss(target, model(patches).probs),
            model.parameters(),
            max_entries=max_entries or None,
            rng=rng.child("probe"),
        )
    except (ClipVQAError, OSError) as e:
        fail(e)
    passed = report.passed(tolerance)
    console.print_json(
        data={
            "max_error": report.max_error,
            "tolerance": tolerance,
            "passed": passed,
            "modules": report.by_module(depth=2),
        }
    )
    if not passed:
        err_console.print("❌ [red]Gradient check failed[/red]")
        raise typer.Exit(code=2)


@app.command("encode-mos")
def encode_mos_command(
    score: float = typer.Argument(..., help="Scaled MOS in [T, U]"),
    low: float = typer.Option(1.0, "--low", help="T"),
    high: float = typer.Option(5.0, "--high", help="U"),
    grades: int = typer.Option(5, "--grades", help="g"),
):
    """Print the probability vector of a scaled MOS."""
    try:
        probs = encode_mos(score, ReferenceRatings(low, high, grades))
    except ClipVQAError as e:
        fail(e)
    console.print_json(data={"score": score, "probs": probs.tolist()})


@app.command()
def serve(
    checkpoint: Optional[Path] = typer.Option(
        None, "--checkpoint", help="Checkpoint to serve (default: CLIPVQA_CHECKPOINT)"
    ),
    host: str = typer.Option("127.0.0.1", "--host"),
    port: int = typer.Option(8000, "--port"),
):
    """Run the HTTP prediction service."""
    import uvicorn

    from clip_vqa.main import app as api

    if checkpoint is not None:
        api.state.checkpoint = str(checkpoint)
    err_console.print(f"🚀 [green]Serving on http://{host}:{port}[/green]")
    uvicorn.run(api, host=host, port=port)


def main(argv: Optional[List[str]] = None) -> int:
    """Console entry point; click usage errors map to exit 1."""
    try:
        result = app(args=argv, prog_name="clipvqa", standalone_mode=False)
    except click_exceptions.UsageError as e:
        e.show()
        return 1
    except click_exceptions.Abort:
        err_console.print("❌ [red]Aborted[/red]")
        return 1
    return result if isinstance(result, int) else 0
