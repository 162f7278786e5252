import base64
import io
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np
import pytest
from PIL import Image as PILImage

from sheetrefine import SynthSheetSpec, load_image, save_image, synth_sheet
from sheetrefine.cli import main


def make_sheet(tmp_path, seed=31, rows=2, cols=3, outliers=frozenset({5}),
               amplitude=10, jitter=2, cell=128) -> Path:
    spec = SynthSheetSpec(seed=seed, rows=rows, cols=cols,
                          outlier_positions=frozenset(outliers),
                          noise_amplitude=amplitude, jitter=jitter,
                          cell_width=cell, cell_height=cell)
    sheet, _ = synth_sheet(spec)
    path = tmp_path / "sheet.png"
    save_image(sheet, path)
    return path


class QuietGenHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        sheet, _ = synth_sheet(SynthSheetSpec(seed=5, rows=2, cols=3,
                                              noise_amplitude=8, jitter=1,
                                              cell_width=96, cell_height=96))
        buf = io.BytesIO()
        PILImage.fromarray(np.asarray(sheet.pixels)).save(buf, format="PNG")
        payload = base64.b64encode(buf.getvalue()).decode()
        body = json.dumps({"image_b64": payload}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def gen_endpoint():
    server = HTTPServer(("127.0.0.1", 0), QuietGenHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/generate"
    server.shutdown()


class TestSliceCommand:
    def test_uniform_grid_writes_parts_and_index(self, tmp_path):
        sheet = make_sheet(tmp_path, rows=2, cols=2, outliers=frozenset(),
                           cell=256)
        out = tmp_path / "parts"
        assert main(["slice", str(sheet), "--grid", "2x2", "--out", str(out)]) == 0
        files = sorted(p.name for p in out.glob("part_*.png"))
        assert files == ["part_000.png", "part_001.png", "part_002.png",
                         "part_003.png"]
        for name in files:
            img = load_image(out / name)
            assert (img.width, img.height) == (256, 256)
        index = json.loads((out / "parts.json").read_text())
        assert index["source_width"] == 512
        assert [e["index"] for e in index["parts"]] == [0, 1, 2, 3]

    def test_explicit_spec_in_order(self, tmp_path):
        sheet = make_sheet(tmp_path, rows=1, cols=2, outliers=frozenset(),
                           cell=64)
        spec = tmp_path / "crops.json"
        rects = [{"x": 8 * i, "y": 0, "w": 8, "h": 8} for i in range(5)]
        spec.write_text(json.dumps({"mode": "explicit", "rects": rects}))
        out = tmp_path / "parts"
        assert main(["slice", str(sheet), "--spec", str(spec),
                     "--out", str(out)]) == 0
        index = json.loads((out / "parts.json").read_text())
        assert len(index["parts"]) == 5
        assert [e["x"] for e in index["parts"]] == [0, 8, 16, 24, 32]
        src = load_image(sheet)
        part0 = load_image(out / "part_000.png")
        assert np.array_equal(part0.pixels, src.pixels[0:8, 0:8])

    def test_bad_spec_leaves_no_files(self, tmp_path, capsys):
        sheet = make_sheet(tmp_path, rows=1, cols=2, outliers=frozenset(),
                           cell=64)
        spec = tmp_path / "crops.json"
        spec.write_text(json.dumps({"mode": "uniform", "rows": 0, "cols": 3}))
        out = tmp_path / "parts"
        assert main(["slice", str(sheet), "--spec", str(spec),
                     "--out", str(out)]) == 1
        assert "error:" in capsys.readouterr().err
        assert not list(out.glob("part_*.png")) if out.exists() else True

    def test_missing_image(self, tmp_path):
        assert main(["slice", str(tmp_path / "nope.png"), "--grid", "2x2",
                     "--out", str(tmp_path / "o")]) == 1

    def test_bad_grid_syntax(self, tmp_path):
        sheet = make_sheet(tmp_path, rows=1, cols=2, outliers=frozenset(),
                           cell=64)
        assert main(["slice", str(sheet), "--grid", "2by3",
                     "--out", str(tmp_path / "o")]) == 1


class TestRefineCommand:
    def test_synthetic_outlier_removed(self, tmp_path):
        sheet = make_sheet(tmp_path, seed=31, outliers=frozenset({5}))
        parts_dir = tmp_path / "parts"
        assert main(["slice", str(sheet), "--grid", "2x3",
                     "--out", str(parts_dir)]) == 0
        out = tmp_path / "refined"
        assert main(["refine", str(parts_dir), "--out", str(out)]) == 0
        report = json.loads((out / "refine_report.json").read_text())
        assert report["removed"] == [5]
        assert sorted(report["kept"]) == [0, 1, 2, 3, 4]
        kept_files = sorted(p.name for p in (out / "kept").glob("*.png"))
        assert len(kept_files) == 5
        assert "part_005.png" not in kept_files

    def test_identical_parts_all_kept(self, tmp_path):
        sheet = make_sheet(tmp_path, rows=2, cols=2, outliers=frozenset(),
                           amplitude=0, jitter=0)
        parts_dir = tmp_path / "parts"
        main(["slice", str(sheet), "--grid", "2x2", "--out", str(parts_dir)])
        out = tmp_path / "refined"
        assert main(["refine", str(parts_dir), "--out", str(out)]) == 0
        assert len(list((out / "kept").glob("*.png"))) == 4

    def test_explicit_file_list_order(self, tmp_path):
        sheet = make_sheet(tmp_path, seed=8, outliers=frozenset({0}))
        parts_dir = tmp_path / "parts"
        main(["slice", str(sheet), "--grid", "2x3", "--out", str(parts_dir)])
        files = [str(parts_dir / f"part_{i:03d}.png") for i in range(6)]
        out = tmp_path / "refined"
        assert main(["refine", *files, "--out", str(out)]) == 0
        report = json.loads((out / "refine_report.json").read_text())
        assert report["files"] == files
        assert report["removed"] == [0]

    def test_directory_without_index_uses_sorted_names(self, tmp_path):
        sheet = make_sheet(tmp_path, seed=8, outliers=frozenset({3}))
        parts_dir = tmp_path / "parts"
        main(["slice", str(sheet), "--grid", "2x3", "--out", str(parts_dir)])
        (parts_dir / "parts.json").unlink()
        out = tmp_path / "refined"
        assert main(["refine", str(parts_dir), "--out", str(out)]) == 0
        report = json.loads((out / "refine_report.json").read_text())
        assert report["removed"] == [3]

    def test_too_few_parts(self, tmp_path):
        sheet = make_sheet(tmp_path, rows=1, cols=2, outliers=frozenset(),
                           cell=64)
        assert main(["refine", str(sheet), "--out", str(tmp_path / "o")]) == 1

    def test_strictness_zero_is_harsher(self, tmp_path):
        sheet = make_sheet(tmp_path, seed=21, outliers=frozenset({2}))
        parts_dir = tmp_path / "parts"
        main(["slice", str(sheet), "--grid", "2x3", "--out", str(parts_dir)])
        relaxed = tmp_path / "relaxed"
        harsh = tmp_path / "harsh"
        main(["refine", str(parts_dir), "--out", str(relaxed)])
        main(["refine", str(parts_dir), "--strictness", "0",
              "--out", str(harsh)])
        kept_relaxed = json.loads((relaxed / "refine_report.json").read_text())["kept"]
        kept_harsh = json.loads((harsh / "refine_report.json").read_text())["kept"]
        assert set(kept_harsh) <= set(kept_relaxed)
        assert 2 not in kept_harsh


class TestPipelineCommand:
    def test_offline_sheet_run(self, tmp_path):
        sheet = make_sheet(tmp_path, seed=31, outliers=frozenset({5}))
        out = tmp_path / "run"
        assert main(["pipeline", "--sheet", str(sheet), "--grid", "2x3",
                     "--character", "a pink owl", "--out", str(out),
                     "--no-timestamp"]) == 0
        assert (out / "sheet.png").exists()
        assert len(list((out / "parts").glob("part_*.png"))) == 6
        report = json.loads((out / "refine_report.json").read_text())
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["character_prompt"] == "a pink owl"
        assert [e["part_index"] for e in manifest["images"]] == report["kept"]
        assert manifest["created_at"] is None
        assert manifest["refine_report_path"] == "refine_report.json"
        for entry in manifest["images"]:
            assert (out / entry["file"]).exists()
            assert entry["score"] == report["scores"][entry["part_index"]]

    def test_mock_endpoint_run(self, tmp_path, gen_endpoint):
        out = tmp_path / "run"
        assert main(["pipeline", "--character", "a golden dog with red hat",
                     "--style", "watercolor style",
                     "--gen-endpoint", gen_endpoint,
                     "--grid", "2x3", "--out", str(out)]) == 0
        assert (out / "sheet.png").exists()
        assert (out / "manifest.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["style"] == "watercolor style"
        assert manifest["created_at"] is not None

    def test_endpoint_from_environment(self, tmp_path, gen_endpoint, monkeypatch):
        monkeypatch.setenv("SHEETREFINE_GEN_ENDPOINT", gen_endpoint)
        out = tmp_path / "run"
        assert main(["pipeline", "--character", "an elf",
                     "--out", str(out)]) == 0
        assert (out / "manifest.json").exists()

    def test_no_endpoint_and_no_sheet_fails_in_generation_phase(
            self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("SHEETREFINE_GEN_ENDPOINT", raising=False)
        out = tmp_path / "run"
        assert main(["pipeline", "--character", "an elf",
                     "--out", str(out)]) == 1
        err = capsys.readouterr().err
        assert "generation" in err
        assert not (out / "manifest.json").exists()

    def test_unreachable_endpoint_retains_nothing_from_later_phases(
            self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["pipeline", "--character", "an elf",
                     "--gen-endpoint", "http://127.0.0.1:1/gen",
                     "--out", str(out)]) == 1
        assert "generation phase failed" in capsys.readouterr().err
        assert not (out / "refine_report.json").exists()

    def test_byte_identical_reports_across_runs_and_threads(self, tmp_path):
        sheet = make_sheet(tmp_path, seed=31, outliers=frozenset({5}))
        args = ["pipeline", "--sheet", str(sheet), "--grid", "2x3",
                "--character", "a pink owl", "--no-timestamp"]
        outs = [tmp_path / f"run{i}" for i in range(3)]
        assert main(args + ["--out", str(outs[0]), "--threads", "1"]) == 0
        assert main(args + ["--out", str(outs[1]), "--threads", "1"]) == 0
        assert main(args + ["--out", str(outs[2]), "--threads", "4"]) == 0
        for name in ("refine_report.json", "manifest.json"):
            blobs = [(o / name).read_bytes() for o in outs]
            assert blobs[0] == blobs[1] == blobs[2]


class TestEvalCommand:
    def test_identical_image_embeddings(self, tmp_path):
        images = tmp_path / "images.json"
        text = tmp_path / "text.json"
        images.write_text(json.dumps(
            [{"id": f"i{k}", "values": [0.5, 0.5]} for k in range(3)]))
        text.write_text(json.dumps({"id": "t", "values": [1.0, 0.0]}))
        out = tmp_path / "eval.json"
        assert main(["eval", str(images), str(text), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["identity_consistency"] == 1.0
        assert report["n_images"] == 3
        assert report["n_pairs"] == 3

    def test_hand_built_vectors(self, tmp_path):
        images = tmp_path / "images.json"
        text = tmp_path / "text.json"
        images.write_text(json.dumps([
            {"id": "a", "values": [1.0, 0.0]},
            {"id": "b", "values": [0.0, 1.0]},
            {"id": "c", "values": [1.0, 0.0]},
        ]))
        text.write_text(json.dumps([{"id": "t", "values": [1.0, 0.0]}]))
        out = tmp_path / "eval.json"
        assert main(["eval", str(images), str(text), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["identity_consistency"] == pytest.approx(1 / 3, abs=1e-15)
        assert report["prompt_similarity"] == pytest.approx(2 / 3, abs=1e-15)

    def test_dimension_mismatch_exits_one(self, tmp_path, capsys):
        images = tmp_path / "images.json"
        text = tmp_path / "text.json"
        images.write_text(json.dumps([{"id": "a", "values": [1.0, 0.0]},
                                      {"id": "b", "values": [1.0, 0.0]}]))
        text.write_text(json.dumps({"id": "t", "values": [1.0, 0.0, 0.0]}))
        assert main(["eval", str(images), str(text),
                     "--out", str(tmp_path / "e.json")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_text_file_must_hold_one_embedding(self, tmp_path):
        images = tmp_path / "images.json"
        text = tmp_path / "text.json"
        images.write_text(json.dumps([{"id": "a", "values": [1.0]},
                                      {"id": "b", "values": [1.0]}]))
        text.write_text(json.dumps([{"id": "t", "values": [1.0]},
                                    {"id": "u", "values": [1.0]}]))
        assert main(["eval", str(images), str(text),
                     "--out", str(tmp_path / "e.json")]) == 1


class TestSynthCommand:
    def test_writes_sheet_and_ground_truth(self, tmp_path):
        out = tmp_path / "synth"
        assert main(["synth", "--seed", "7", "--rows", "2", "--cols", "3",
                     "--outliers", "5", "--amplitude", "10", "--jitter", "2",
                     "--cell-size", "64", "--out", str(out)]) == 0
        truth = json.loads((out / "ground_truth.json").read_text())
        assert truth["flags"] == [False, False, False, False, False, True]
        assert truth["outlier_positions"] == [5]
        sheet = load_image(out / "sheet.png")
        assert (sheet.width, sheet.height) == (192, 128)

    def test_matches_library_output(self, tmp_path):
        out = tmp_path / "synth"
        main(["synth", "--seed", "3", "--cell-size", "64", "--out", str(out)])
        expected, _ = synth_sheet(SynthSheetSpec(seed=3, cell_width=64,
                                                 cell_height=64))
        written = load_image(out / "sheet.png")
        assert np.array_equal(written.pixels, expected.pixels)

    def test_bad_outlier_index(self, tmp_path):
        assert main(["synth", "--seed", "1", "--outliers", "99",
                     "--out", str(tmp_path / "o")]) == 1


class TestCliSurface:
    def test_help_exits_zero(self):
        assert main(["--help"]) == 0

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 1

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_out_flag(self, tmp_path):
        sheet = make_sheet(tmp_path, rows=1, cols=2, outliers=frozenset(),
                           cell=64)
        assert main(["slice", str(sheet), "--grid", "1x2"]) == 1

    def test_version_flag(self):
        assert main(["--version"]) == 0
