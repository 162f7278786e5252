"""Command-line pipeline: slice, refine, pipeline, eval, synth.

sheetrefine slice SHEET.png --grid 2x3 --out parts/
sheetrefine refine parts/ --strictness 1.0 --out refined/
sheetrefine pipeline --character "a pink owl" --gen-endpoint URL --out run/
sheetrefine pipeline --sheet SHEET.png --grid 2x3 --out run/
sheetrefine eval images.json text.json --out eval_report.json
sheetrefine synth --seed 7 --outliers 5 --amplitude 10 --jitter 2 --out synth/

Exit codes: 0 success, 1 bad input or usage, 2 internal invariant violation.
The generation endpoint may also come from SHEETREFINE_GEN_ENDPOINT.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import shutil
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import InternalError, SheetRefineError
from .eval_metrics import evaluate_set, load_embeddings
from .generation import (
    DEFAULT_GRID_PHRASE,
    GenRequest,
    SynthSheetSpec,
    build_grid_prompt,
    request_grid,
    synth_sheet,
)
from .grid_slicer import CropRect, PartSet, parse_crop_spec, slice_crops, slice_uniform
from .image_core import Image, load_image, save_image
from .mutual_info import AnalysisConfig
from .refine import RefineConfig, RefineReport, refine_set

ENDPOINT_ENV_VAR = "SHEETREFINE_GEN_ENDPOINT"


def _log(args: argparse.Namespace, message: str) -> None:
    if getattr(args, "verbose", False):
        print(message, file=sys.stderr)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _parse_grid(text: str) -> tuple[int, int]:
    match = re.fullmatch(r"(\d+)x(\d+)", text.strip(), flags=re.IGNORECASE)
    if not match:
        raise SheetRefineError(
            f"--grid must look like ROWSxCOLS (e.g. 2x3), got {text!r}")
    return int(match.group(1)), int(match.group(2))


def _slice_sheet(sheet: Image, args: argparse.Namespace) -> PartSet:
    if getattr(args, "spec", None):
        return slice_crops(sheet, parse_crop_spec(args.spec))
    grid = getattr(args, "grid", None) or "2x3"
    rows, cols = _parse_grid(grid)
    return slice_uniform(sheet, rows, cols)


def _write_parts(sheet: Image, part_set: PartSet, out_dir: Path,
                 source_label: str) -> list[str]:
    """Write part_NNN.png files plus parts.json; remove everything on failure."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    names: list[str] = []
    try:
        for i, part in enumerate(part_set.parts):
            name = f"part_{i:03d}.png"
            save_image(part, out_dir / name)
            written.append(out_dir / name)
            names.append(name)
        entries = []
        for i, (name, rect) in enumerate(zip(names, part_set.rects)):
            entry = {"index": i, "file": name, "x": rect.x, "y": rect.y,
                     "w": rect.width, "h": rect.height}
            if rect.label is not None:
                entry["label"] = rect.label
            entries.append(entry)
        index_path = out_dir / "parts.json"
        written.append(index_path)
        _write_json(index_path, {
            "source": source_label,
            "source_width": sheet.width,
            "source_height": sheet.height,
            "parts": entries,
        })
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return names


def _refine_config(args: argparse.Namespace) -> RefineConfig:
    return RefineConfig(
        strictness=args.strictness,
        include_self_pairs=args.include_self,
        iterative=args.iterative,
        min_kept=args.min_kept,
        analysis=AnalysisConfig(bins=args.bins, resolution=args.resolution),
    )


def _collect_part_paths(inputs: list[str]) -> list[Path]:
    """Resolve a directory (parts.json order, else sorted) or explicit files."""
    if len(inputs) == 1 and Path(inputs[0]).is_dir():
        directory = Path(inputs[0])
        index_path = directory / "parts.json"
        if index_path.exists():
            try:
                index = json.loads(index_path.read_text())
                files = [directory / entry["file"] for entry in index["parts"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SheetRefineError(
                    f"malformed parts index {index_path}: {exc}") from exc
            if not files:
                raise SheetRefineError(f"no parts listed in {index_path}")
            return files
        files = sorted(p for p in directory.iterdir()
                       if p.suffix.lower() in {".png", ".jpg", ".jpeg"})
        if not files:
            raise SheetRefineError(f"no image files found in {directory}")
        return files
    return [Path(s) for s in inputs]


def _part_set_from_files(paths: list[Path]) -> PartSet:
    images = [load_image(p) for p in paths]
    rects = tuple(CropRect(x=0, y=0, width=img.width, height=img.height)
                  for img in images)
    return PartSet(parts=tuple(images), source_id="file-list", rects=rects)


def _report_payload(report: RefineReport, files: list[str]) -> dict:
    payload = {"files": files}
    payload.update(report.to_dict())
    return payload


def cmd_slice(args: argparse.Namespace) -> int:
    sheet = load_image(args.image)
    part_set = _slice_sheet(sheet, args)
    out_dir = Path(args.out)
    names = _write_parts(sheet, part_set, out_dir, source_label=args.image)
    _log(args, f"wrote {len(names)} parts to {out_dir}")
    return 0


def cmd_refine(args: argparse.Namespace) -> int:
    paths = _collect_part_paths(args.inputs)
    part_set = _part_set_from_files(paths)
    report = refine_set(part_set, _refine_config(args), threads=args.threads)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [str(p) for p in paths]
    _write_json(out_dir / "refine_report.json", _report_payload(report, files))

    kept_dir = out_dir / "kept"
    kept_dir.mkdir(exist_ok=True)
    used_names: set[str] = set()
    for index in report.kept:
        src = paths[index]
        name = src.name if src.name not in used_names else f"{index:03d}_{src.name}"
        used_names.add(name)
        shutil.copyfile(src, kept_dir / name)
    _log(args, f"kept {len(report.kept)} of {len(paths)} parts "
               f"(removed {list(report.removed)})")
    return 0


def _phase(name: str):
    """Label any user-facing failure inside a pipeline phase."""
    class _PhaseContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, SheetRefineError):
                raise SheetRefineError(f"{name} phase failed: {exc}") from exc
            return False
    return _PhaseContext()


def _obtain_sheet(args: argparse.Namespace) -> Image:
    if args.sheet:
        return load_image(args.sheet)
    endpoint = args.gen_endpoint or os.environ.get(ENDPOINT_ENV_VAR)
    if not endpoint:
        raise SheetRefineError(
            "no --sheet given and no generation endpoint configured "
            f"(--gen-endpoint or {ENDPOINT_ENV_VAR})")
    if not args.character:
        raise SheetRefineError("--character is required when generating a sheet")
    prompt = build_grid_prompt(args.character, args.style, args.grid_phrase)
    request = GenRequest(prompt=prompt.rendered, seed=args.seed,
                         width=args.gen_width, height=args.gen_height,
                         steps=args.steps, guidance=args.guidance)
    return request_grid(endpoint, request, retries=args.gen_retries)


def cmd_pipeline(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with _phase("generation"):
        sheet = _obtain_sheet(args)
        save_image(sheet, out_dir / "sheet.png")
    _log(args, f"sheet ready: {sheet.width}x{sheet.height}")

    with _phase("slice"):
        part_set = _slice_sheet(sheet, args)
        names = _write_parts(sheet, part_set, out_dir / "parts",
                             source_label="sheet.png")
    _log(args, f"sliced {len(names)} parts")

    with _phase("refine"):
        report = refine_set(part_set, _refine_config(args), threads=args.threads)
        files = [f"parts/{name}" for name in names]
        _write_json(out_dir / "refine_report.json",
                    _report_payload(report, files))
    _log(args, f"kept {list(report.kept)}, removed {list(report.removed)}")

    with _phase("manifest"):
        images = []
        for index in report.kept:
            rel = f"parts/{names[index]}"
            if not (out_dir / rel).exists():
                raise InternalError(f"kept part file missing: {rel}")
            images.append({"file": rel, "part_index": index,
                           "score": report.scores[index]})
        created_at = None if args.no_timestamp else (
            datetime.now(timezone.utc).isoformat(timespec="seconds"))
        _write_json(out_dir / "manifest.json", {
            "character_prompt": args.character or "",
            "style": args.style or "",
            "images": images,
            "refine_report_path": "refine_report.json",
            "created_at": created_at,
            "tool_version": __version__,
        })
    _log(args, f"manifest written to {out_dir / 'manifest.json'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    images = load_embeddings(args.image_embeddings)
    texts = load_embeddings(args.text_embedding)
    if len(texts) != 1:
        raise SheetRefineError(
            f"text embedding file must hold exactly one embedding, "
            f"got {len(texts)}: {args.text_embedding}")
    report = evaluate_set(images, texts[0])
    _write_json(Path(args.out), report.to_dict())
    _log(args, f"prompt_similarity={report.prompt_similarity:.6f} "
               f"identity_consistency={report.identity_consistency:.6f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    outliers = frozenset(int(tok) for tok in args.outliers.split(",") if tok.strip()) \
        if args.outliers else frozenset()
    spec = SynthSheetSpec(
        seed=args.seed, rows=args.rows, cols=args.cols,
        outlier_positions=outliers, noise_amplitude=args.amplitude,
        jitter=args.jitter, cell_width=args.cell_size, cell_height=args.cell_size,
    )
    sheet, flags = synth_sheet(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(sheet, out_dir / "sheet.png")
    _write_json(out_dir / "ground_truth.json", {
        "seed": spec.seed,
        "rows": spec.rows,
        "cols": spec.cols,
        "cell_width": spec.cell_width,
        "cell_height": spec.cell_height,
        "noise_amplitude": spec.noise_amplitude,
        "jitter": spec.jitter,
        "outlier_positions": sorted(spec.outlier_positions),
        "flags": flags,
    })
    _log(args, f"synthetic sheet written to {out_dir}")
    return 0


def _add_common(parser: argparse.ArgumentParser, out_help: str) -> None:
    parser.add_argument("--out", required=True, help=out_help)
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for pairwise MI (default: all cores)")
    parser.add_argument("--verbose", action="store_true",
                        help="progress messages on stderr")


def _add_slicing(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--grid", help="uniform grid as ROWSxCOLS (default 2x3)")
    group.add_argument("--spec", help="crop-spec JSON file")


def _add_refine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bins", type=int, default=64,
                        help="intensity bins for histograms (default 64)")
    parser.add_argument("--resolution", type=int, default=256,
                        help="square analysis resolution (default 256)")
    parser.add_argument("--strictness", type=float, default=1.0,
                        help="k in the mean - k*stddev threshold (default 1.0)")
    parser.add_argument("--include-self", action="store_true",
                        help="fold each part's own entropy into its score")
    parser.add_argument("--iterative", action="store_true",
                        help="re-filter survivors until stable")
    parser.add_argument("--min-kept", type=int, default=2,
                        help="never drop below this many parts (default 2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sheetrefine",
        description="Refine a character-sheet image grid into a consistent subset.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p_slice = sub.add_parser("slice", help="cut a sheet into part images")
    p_slice.add_argument("image", help="sheet image file (PNG or JPEG)")
    _add_slicing(p_slice)
    _add_common(p_slice, "directory for part_NNN.png and parts.json")
    p_slice.set_defaults(func=cmd_slice)

    p_refine = sub.add_parser("refine", help="filter part images by MI consistency")
    p_refine.add_argument("inputs", nargs="+",
                          help="parts directory or explicit image files")
    _add_refine_flags(p_refine)
    _add_common(p_refine, "directory for refine_report.json and kept/")
    p_refine.set_defaults(func=cmd_refine)

    p_pipe = sub.add_parser("pipeline", help="generate, slice, refine, manifest")
    p_pipe.add_argument("--character", default="",
                        help="character description for the grid prompt")
    p_pipe.add_argument("--style", default="", help="style description")
    p_pipe.add_argument("--grid-phrase", default=DEFAULT_GRID_PHRASE,
                        help=f"grid trigger phrase (default {DEFAULT_GRID_PHRASE!r})")
    p_pipe.add_argument("--sheet", help="existing sheet image; skips generation")
    p_pipe.add_argument("--gen-endpoint",
                        help=f"text-to-image service URL (or {ENDPOINT_ENV_VAR})")
    p_pipe.add_argument("--seed", type=int, default=0, help="generation seed")
    p_pipe.add_argument("--gen-width", type=int, default=1024)
    p_pipe.add_argument("--gen-height", type=int, default=1024)
    p_pipe.add_argument("--steps", type=int, default=30)
    p_pipe.add_argument("--guidance", type=float, default=7.5)
    p_pipe.add_argument("--gen-retries", type=int, default=0,
                        help="extra attempts on network/status failures")
    _add_slicing(p_pipe)
    _add_refine_flags(p_pipe)
    p_pipe.add_argument("--no-timestamp", action="store_true",
                        help="write null created_at for byte-reproducible output")
    _add_common(p_pipe, "directory for sheet, parts, report, and manifest")
    p_pipe.set_defaults(func=cmd_pipeline)

    p_eval = sub.add_parser("eval", help="cosine metrics over embedding files")
    p_eval.add_argument("image_embeddings", help="JSON array of image embeddings")
    p_eval.add_argument("text_embedding", help="JSON with one text embedding")
    _add_common(p_eval, "output path for the eval report JSON")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="write a synthetic benchmark sheet")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--rows", type=int, default=2)
    p_synth.add_argument("--cols", type=int, default=3)
    p_synth.add_argument("--outliers", default="",
                         help="comma-separated outlier cell indices")
    p_synth.add_argument("--amplitude", type=int, default=0,
                         help="per-pixel noise amplitude (0-128)")
    p_synth.add_argument("--jitter", type=int, default=0,
                         help="max translation in pixels")
    p_synth.add_argument("--cell-size", type=int, default=256,
                         help="square cell edge in pixels")
    _add_common(p_synth, "directory for sheet.png and ground_truth.json")
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help/--version; fold
        # usage problems into the user-error code.
        return 0 if not exc.code else 1
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except SheetRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        if getattr(args, "verbose", False):
            traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
