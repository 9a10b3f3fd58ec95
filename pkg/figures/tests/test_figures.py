"""Figure rendering: determinism, validation, the four families."""

import os

import numpy as np
import pytest

from stvfigures.cli import main
from stvfigures.figures import FigureSpec, plot_series, render_all, series_lines
from stvfigures.table import COLUMNS, TableError, read_table


def write_csv(path, n_paths=2, n_steps=4):
    rng = np.random.default_rng(7)
    rows = []
    for pid in range(n_paths):
        tau = 0.1
        for n in range(1, n_steps + 1):
            vals = rng.uniform(1e-4, 1e-2, size=8)
            rows.append(
                f"{pid},{n},{n * tau},{tau},25,"
                + ",".join(f"{v:.17g}" for v in vals)
                + ",3"
            )
    path.write_text(",".join(COLUMNS) + "\n" + "\n".join(rows) + "\n")
    return str(path)


class TestTable:
    def test_read_round_trip(self, tmp_path):
        f = write_csv(tmp_path / "t.csv")
        table = read_table(f)
        assert set(table) == set(COLUMNS)
        assert table["path_id"].dtype == np.int64
        assert table["t_n"].dtype == np.float64
        assert table["n"].tolist() == [1, 2, 3, 4] * 2

    def test_empty_body_rejected(self, tmp_path):
        f = tmp_path / "empty.csv"
        f.write_text(",".join(COLUMNS) + "\n")
        with pytest.raises(TableError, match="no data rows"):
            read_table(str(f))

    def test_bad_header_rejected(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("a,b\n1,2\n")
        with pytest.raises(TableError, match="unexpected header"):
            read_table(str(f))


class TestPlotSeries:
    def test_writes_file(self, tmp_path):
        csv = write_csv(tmp_path / "t.csv")
        out = str(tmp_path / "fig.png")
        spec = FigureSpec(inputs=(("run", csv),), quantity="eta_space1", out_path=out)
        assert plot_series(spec) == out
        assert os.path.getsize(out) > 0

    def test_rerender_is_byte_identical(self, tmp_path):
        csv = write_csv(tmp_path / "t.csv")
        a = FigureSpec(inputs=(("run", csv),), quantity="eta_lin",
                       out_path=str(tmp_path / "a.png"))
        b = FigureSpec(inputs=(("run", csv),), quantity="eta_lin",
                       out_path=str(tmp_path / "b.png"))
        plot_series(a)
        plot_series(b)
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_missing_column_names_available(self, tmp_path):
        csv = write_csv(tmp_path / "t.csv")
        out = tmp_path / "fig.png"
        spec = FigureSpec(inputs=(("run", csv),), quantity="eta_bogus", out_path=str(out))
        with pytest.raises(TableError, match="eta_bogus") as exc:
            plot_series(spec)
        assert "eta_time1" in str(exc.value)              # lists what exists
        assert not out.exists()                           # nothing written

    def test_empty_body_writes_nothing(self, tmp_path):
        f = tmp_path / "empty.csv"
        f.write_text(",".join(COLUMNS) + "\n")
        out = tmp_path / "fig.png"
        spec = FigureSpec(inputs=(("run", str(f)),), quantity="eta_lin", out_path=str(out))
        with pytest.raises(TableError):
            plot_series(spec)
        assert not out.exists()

    def test_grouping_line_counts(self, tmp_path):
        csv = write_csv(tmp_path / "t.csv", n_paths=3)
        by_mean = series_lines(
            FigureSpec(inputs=(("a", csv), ("b", csv)), quantity="eta_lin", out_path="")
        )
        assert [name for name, _, _ in by_mean] == ["a", "b"]
        by_path = series_lines(
            FigureSpec(inputs=(("a", csv),), quantity="eta_lin", out_path="",
                       grouping="path")
        )
        assert [name for name, _, _ in by_path] == [f"a path {p}" for p in range(3)]

    def test_spec_validation(self):
        with pytest.raises(TableError):
            FigureSpec(inputs=(), quantity="eta_lin", out_path="x.png")
        with pytest.raises(TableError):
            FigureSpec(inputs=(("a", "f"),), quantity="eta_lin", out_path="x.png",
                       grouping="cluster")


class TestFamilies:
    def test_render_all_produces_four_files(self, tmp_path):
        csv = write_csv(tmp_path / "t.csv")
        paths = render_all(csv, str(tmp_path / "figs"))
        names = [os.path.basename(p) for p in paths]
        assert names == ["indicators.png", "dofs.png", "timesteps.png", "schemes.png"]
        assert all(os.path.getsize(p) > 0 for p in paths)

    def test_render_all_accepts_labelled_inputs(self, tmp_path):
        csv = write_csv(tmp_path / "t.csv")
        paths = render_all([("si", csv), ("fix", csv)], str(tmp_path / "figs"))
        assert len(paths) == 4


class TestCli:
    def test_renders_selected_families(self, tmp_path, capsys):
        csv = write_csv(tmp_path / "t.csv")
        out = str(tmp_path / "figs")
        code = main(["--csv", f"run={csv}", "--out", out, "--families", "dofs"])
        assert code == 0
        assert os.path.exists(os.path.join(out, "dofs.png"))
        assert "wrote" in capsys.readouterr().out

    def test_default_renders_all(self, tmp_path):
        csv = write_csv(tmp_path / "t.csv")
        out = str(tmp_path / "figs")
        assert main(["--csv", csv, "--out", out]) == 0
        assert len(os.listdir(out)) == 4

    def test_bad_table_exits_2(self, tmp_path, capsys):
        f = tmp_path / "empty.csv"
        f.write_text(",".join(COLUMNS) + "\n")
        code = main(["--csv", str(f), "--out", str(tmp_path / "figs")])
        assert code == 2
        assert "error:" in capsys.readouterr().err
