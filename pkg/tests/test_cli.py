import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from dctsign.cli import (
    CSV_COLUMNS,
    expand_sweep,
    main,
    parse_sweep,
    run_seed,
)
from dctsign.codecmodel import (
    CodingConfig,
    SignMask,
    Unknown,
    encode_dc_chain,
    read_coeff_file,
    write_coeff_file,
)
from dctsign.imagecore import PixelImage, read_pgm, write_pgm
from dctsign.transform import CoeffImage

from conftest import natural_crop

NAMES = ("camera", "coins", "moon", "text", "page")


@pytest.fixture
def pgm(tmp_path):
    path = tmp_path / "camera.pgm"
    path.write_bytes(write_pgm(PixelImage(natural_crop("camera", 32))))
    return path


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "images"
    d.mkdir()
    for name in NAMES:
        (d / f"{name}.pgm").write_bytes(write_pgm(PixelImage(natural_crop(name, 32))))
    return d


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_mask_writes_file_and_sidecar(pgm, tmp_path, capsys):
    out = tmp_path / "c.sbc"
    code, stdout, _ = run(["mask", "--in", pgm, "--u", 3, "--dc-pred", 0, "--out", out], capsys)
    assert code == 0
    summary = json.loads(stdout)
    assert (tmp_path / "c.sbc.truth").exists()
    coeffs, mask, chain, cfg = read_coeff_file(out.read_text())
    assert summary["unknowns"] == len(mask) <= 3 * 16
    per_block = {}
    for key, _ in mask:
        per_block[key[:2]] = per_block.get(key[:2], 0) + 1
    assert max(per_block.values()) <= 3


def test_mask_twos_gives_asymmetric_candidates(pgm, tmp_path, capsys):
    out = tmp_path / "q.sbc"
    assert run(["mask", "--in", pgm, "--u", 6, "--qf", 95, "--twos", "--out", out], capsys)[0] == 0
    _, mask, _, cfg = read_coeff_file(out.read_text())
    assert cfg.twos_complement and cfg.qf == 95
    assert any(u.lo != -u.hi for _, u in mask)


@pytest.mark.parametrize("u", ["0", "-1", "x"])
def test_mask_rejects_bad_u(pgm, tmp_path, u):
    with pytest.raises(SystemExit) as err:
        main(["mask", "--in", str(pgm), "--u", u, "--out", str(tmp_path / "o")])
    assert err.value.code == 2


def test_mask_u_above_block_area(pgm, tmp_path, capsys):
    assert run(["mask", "--in", pgm, "--u", 65, "--out", tmp_path / "o"], capsys)[0] == 2


def test_mask_bad_pgm_is_format_error(tmp_path, capsys):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    code, _, err = run(["mask", "--in", bad, "--u", 2, "--out", tmp_path / "o"], capsys)
    assert code == 3 and "format error" in err


def test_mask_missing_file_is_usage_error(tmp_path, capsys):
    code, _, _ = run(["mask", "--in", tmp_path / "nope.pgm", "--u", 2, "--out", tmp_path / "o"],
                     capsys)
    assert code == 2


def test_recover_writes_image_and_record(pgm, tmp_path, capsys):
    sbc, out, rec = tmp_path / "c.sbc", tmp_path / "r.pgm", tmp_path / "runs.jsonl"
    run(["mask", "--in", pgm, "--u", 3, "--out", sbc], capsys)
    for method in ("naive-neg", "relaxed-lp"):
        code, stdout, _ = run(["recover", "--in", sbc, "--out", out, "--method", method,
                               "--ref", pgm, "--record", rec], capsys)
        assert code == 0 and stdout == ""
    records = [json.loads(line) for line in rec.read_text().splitlines()]
    assert [r["method"] for r in records] == ["naive-neg", "relaxed-lp"]
    assert records[1]["knobs"]["threshold"] == 5
    assert records[1]["psnr"] > records[0]["psnr"]
    assert {"objective", "status", "seconds", "solver"} <= set(records[1])
    assert read_pgm(out.read_bytes()).shape == (32, 32)


def test_recover_hier_milp_record_to_stdout(pgm, tmp_path, capsys):
    sbc, out = tmp_path / "c.sbc", tmp_path / "r.pgm"
    run(["mask", "--in", pgm, "--u", 2, "--out", sbc], capsys)
    code, stdout, _ = run(["recover", "--in", sbc, "--out", out, "--method", "hier-milp",
                           "--region", "16x16", "--align", "global-milp", "--timeout", 600],
                          capsys)
    assert code == 0
    record = json.loads(stdout)
    assert record["knobs"]["region"] == "16x16" and record["knobs"]["timeout"] == 600
    assert record["status"] == "optimal"


def test_recover_unknown_method_lists_valid_ones(pgm, tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["recover", "--in", str(pgm), "--out", str(tmp_path / "o"), "--method", "magic"])
    assert err.value.code == 2
    assert "hier-milp" in capsys.readouterr().err


def test_recover_bad_coeff_file(tmp_path, capsys):
    bad = tmp_path / "bad.sbc"
    bad.write_text("SBC9\n")
    code, _, _ = run(["recover", "--in", bad, "--out", tmp_path / "o.pgm"], capsys)
    assert code == 3


def test_recover_infeasible_is_solver_failure(tmp_path, capsys):
    data = np.zeros((1, 1, 8, 8))
    coeffs = CoeffImage(data)
    # a DC of magnitude 5000 decodes far outside [0, 255] under either sign
    mask = SignMask(1, 1, 8, {(0, 0, 0, 0): Unknown(-5000.0, 5000.0, 5000.0)})
    cfg = CodingConfig()
    sbc = tmp_path / "c.sbc"
    sbc.write_text(write_coeff_file(coeffs, mask, encode_dc_chain(coeffs.dc, 0), cfg))
    code, _, err = run(["recover", "--in", sbc, "--out", tmp_path / "o.pgm",
                        "--method", "hier-milp", "--region", "8x8"], capsys)
    assert code == 4 and "solver failure" in err


def test_metrics_command(pgm, tmp_path, capsys):
    other = tmp_path / "other.pgm"
    x = natural_crop("camera", 32)
    other.write_bytes(write_pgm(PixelImage(np.clip(x + 1, 0, 255))))
    code, stdout, _ = run(["metrics", "--ref", pgm, "--test", pgm, "--laplacian"], capsys)
    out = json.loads(stdout)
    assert code == 0 and out["psnr"] is None and out["ssim"] == pytest.approx(1.0)
    assert "laplacian_b" in out
    code, stdout, _ = run(["metrics", "--ref", pgm, "--test", other], capsys)
    assert json.loads(stdout)["psnr"] > 40


def test_metrics_size_mismatch(pgm, tmp_path, capsys):
    small = tmp_path / "s.pgm"
    small.write_bytes(write_pgm(PixelImage(np.zeros((16, 16)))))
    assert run(["metrics", "--ref", pgm, "--test", small], capsys)[0] == 2


# -- bench ------------------------------------------------------------------

def test_parse_sweep():
    sweep = parse_sweep("# demo\nU=3,5,7\nmethod=[naive-neg, relaxed-lp]\nT=default,0\nregion=16x16\n")
    assert sweep["U"] == [3, 5, 7] and sweep["T"] == [None, 0.0]
    assert sweep["region"] == [(16, 16)]
    assert len(expand_sweep(sweep)) == 12


@pytest.mark.parametrize("text", ["U", "colour=1", "U=3\nU=4", "U=", "U=x",
                                  "method=magic", "align=sideways"])
def test_parse_sweep_errors(text):
    from dctsign.cli import InputFormatError
    with pytest.raises(InputFormatError):
        parse_sweep(text)


def test_run_seed_depends_on_all_parts():
    seeds = {run_seed(m, n, c) for m in (0, 1) for n in ("a", "b") for c in (0, 1)}
    assert len(seeds) == 8
    assert run_seed(0, "a", 0) == run_seed(0, "a", 0) < 2 ** 31


def bench(image_dir, sweep_text, tmp_path, capsys, *extra):
    sweep = tmp_path / "sweep.txt"
    sweep.write_text(sweep_text)
    code, stdout, err = run(["bench", "--images", image_dir, "--sweep", sweep, *extra], capsys)
    assert code == 0, err
    return stdout


def test_bench_row_counts_and_schema(image_dir, tmp_path, capsys):
    text = "U=3,5,7\nmethod=naive-neg,relaxed-lp,hier-milp\nregion=16x16\n"
    rows = list(csv.DictReader(io.StringIO(bench(image_dir, text, tmp_path, capsys))))
    assert list(rows[0]) == CSV_COLUMNS
    data = [r for r in rows if r["image"] != "mean;median"]
    agg = [r for r in rows if r["image"] == "mean;median"]
    assert (len(data), len(agg)) == (45, 9)
    assert all(r["status"] == "ok=5/5" for r in agg)
    for r in agg:
        block = [float(d["ssim"]) for d in data
                 if (d["U"], d["method"]) == (r["U"], r["method"])]
        mean, median = (float(v) for v in r["ssim"].split(";"))
        assert mean == pytest.approx(np.mean(block), abs=1e-6)
        assert median == pytest.approx(np.median(block), abs=1e-6)
    assert all(r["seconds"] == "" for r in rows)


def test_bench_is_byte_identical_and_jobs_independent(image_dir, tmp_path, capsys):
    text = "U=3\nmethod=relaxed-lp,hier-milp\nregion=16x16\nzero_strategy=4\n"
    a = bench(image_dir, text, tmp_path, capsys)
    b = bench(image_dir, text, tmp_path, capsys, "--jobs", 2)
    assert a == b


def test_bench_record_time_fills_seconds(image_dir, tmp_path, capsys):
    rows = list(csv.DictReader(io.StringIO(
        bench(image_dir, "U=2\nmethod=naive-neg\n", tmp_path, capsys, "--record-time"))))
    assert all(float(r["seconds"].split(";")[0]) >= 0 for r in rows)


def test_bench_errors(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    sweep = tmp_path / "s.txt"
    sweep.write_text("U=3\n")
    assert run(["bench", "--images", empty, "--sweep", sweep], capsys)[0] == 2
    (empty / "a.pgm").write_bytes(write_pgm(PixelImage(natural_crop("camera", 16))))
    sweep.write_text("U=three\n")
    assert run(["bench", "--images", empty, "--sweep", sweep], capsys)[0] == 3


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "dctsign.cli", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for sub in ("mask", "recover", "metrics", "bench"):
        assert sub in out
