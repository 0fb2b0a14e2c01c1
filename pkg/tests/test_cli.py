from mdlbox.cli import main


def run(args):
    return main(args)


class TestSweepCommand:
    def test_writes_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run(["sweep", "--factor", "scale", "--lo", "1", "--hi", "10",
                    "--steps", "5", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("factor,")
        assert len(lines) == 6

    def test_loss_subset_and_base(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run(["sweep", "--factor", "shift", "--lo", "0", "--hi", "2",
                    "--steps", "3", "--losses", "MDLt,L1",
                    "--base", "0,0,4,2,0", "--out", str(out)])
        assert code == 0
        assert out.read_text().splitlines()[0] == "factor,MDLt,L1"

    def test_boundary_min_flag(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run(["sweep", "--factor", "angle", "--lo", "0", "--hi", "6.283",
                    "--steps", "5", "--boundary-min", "--out", str(out)])
        assert code == 0

    def test_plot_file_rendered(self, tmp_path):
        out = tmp_path / "sweep.csv"
        plot = tmp_path / "sweep.png"
        code = run(["sweep", "--factor", "scale", "--lo", "1", "--hi", "4",
                    "--steps", "4", "--out", str(out), "--plot", str(plot)])
        assert code == 0
        assert plot.stat().st_size > 0

    def test_validation_failure_exit_1(self, tmp_path):
        code = run(["sweep", "--factor", "scale", "--lo", "5", "--hi", "1",
                    "--steps", "5", "--out", str(tmp_path / "x.csv")])
        assert code == 1

    def test_bad_flags_exit_1(self, tmp_path, capsys):
        code = run(["sweep", "--factor", "twirl", "--lo", "0", "--hi", "1",
                    "--steps", "5", "--out", str(tmp_path / "x.csv")])
        assert code == 1

    def test_io_failure_exit_2(self, tmp_path):
        code = run(["sweep", "--factor", "scale", "--lo", "1", "--hi", "2",
                    "--steps", "3", "--out", str(tmp_path / "no" / "dir" / "x.csv")])
        assert code == 2


class TestGradcheckCommand:
    def test_passes(self, capsys):
        code = run(["gradcheck", "--seed", "11", "--cases", "5"])
        out = capsys.readouterr().out
        assert code == 0
        assert "PASS" in out and "FAIL" not in out

    def test_impossible_tolerance_fails(self, capsys):
        code = run(["gradcheck", "--seed", "11", "--cases", "2", "--tol", "1e-30"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_bad_cases_exit_1(self):
        assert run(["gradcheck", "--cases", "0"]) == 1


def write_eval_fixture(tmp_path):
    gt_dir = tmp_path / "gt"
    pred_dir = tmp_path / "pred"
    gt_dir.mkdir()
    pred_dir.mkdir()
    (gt_dir / "P0001.txt").write_text(
        "imagesource:GoogleEarth\ngsd:0.5\n"
        "0 0 10 0 10 10 0 10 plane 0\n"
        "50 50 70 50 70 80 50 80 ship 0\n")
    (pred_dir / "Task1_plane.txt").write_text("P0001 0.95 0 0 10 0 10 10 0 10\n")
    (pred_dir / "Task1_ship.txt").write_text("P0001 0.90 50 50 70 50 70 80 50 80\n")
    return gt_dir, pred_dir


class TestDotaEvalCommand:
    def test_perfect_predictions(self, tmp_path, capsys):
        gt_dir, pred_dir = write_eval_fixture(tmp_path)
        out = tmp_path / "results.csv"
        code = run(["dota-eval", "--gt", str(gt_dir), "--pred", str(pred_dir),
                    "--iou", "0.5", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 17
        by_class = dict(line.split(",") for line in lines[1:])
        assert by_class["plane"] == "1.0000"
        assert by_class["ship"] == "1.0000"
        assert by_class["mAP"] == f"{2 / 15:.4f}"

    def test_plot_rendered(self, tmp_path):
        gt_dir, pred_dir = write_eval_fixture(tmp_path)
        plot = tmp_path / "ap.png"
        code = run(["dota-eval", "--gt", str(gt_dir), "--pred", str(pred_dir),
                    "--out", str(tmp_path / "r.csv"), "--plot", str(plot)])
        assert code == 0
        assert plot.stat().st_size > 0

    def test_missing_dir_exit_2(self, tmp_path):
        code = run(["dota-eval", "--gt", str(tmp_path / "nope"),
                    "--pred", str(tmp_path / "nope"),
                    "--out", str(tmp_path / "r.csv")])
        assert code == 2

    def test_bad_iou_exit_1(self, tmp_path):
        gt_dir, pred_dir = write_eval_fixture(tmp_path)
        code = run(["dota-eval", "--gt", str(gt_dir), "--pred", str(pred_dir),
                    "--iou", "1.5", "--out", str(tmp_path / "r.csv")])
        assert code == 1
