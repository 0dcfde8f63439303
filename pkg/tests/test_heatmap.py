import re

import numpy as np
import pytest

from uqpinn.heatmap import COLORMAPS, IrregularGridError, color, render_heatmap, to_lattice


def write_field(path, xs, ts, values, extra=""):
    lines = ["x,t,mean_u" + extra]
    for (x, t), v in zip([(x, t) for x in xs for t in ts], values):
        lines.append(f"{x},{t},{v}")
    path.write_text("\n".join(lines) + "\n")


def fills(svg_text):
    body = svg_text.split('<g class="colorbar">')[0]
    return re.findall(r'<rect [^>]*fill="(#[0-9a-f]{6})"', body)


def test_constant_field_single_color(tmp_path):
    f = tmp_path / "f.csv"
    write_field(f, [0, 1, 2], [0, 1], [3.0] * 6)
    out = render_heatmap(f, tmp_path / "o.svg")
    colors = fills(out.read_text())
    assert len(colors) == 6 and len(set(colors)) == 1
    assert colors[0] == color(0.5, 0.0, 1.0)


def test_two_by_two_distinct_colors(tmp_path):
    f = tmp_path / "f.csv"
    write_field(f, [0, 1], [0, 1], [0.0, 1.0, 2.0, 3.0])
    colors = fills(render_heatmap(f, tmp_path / "o.svg").read_text())
    assert len(colors) == 4 and len(set(colors)) == 4


def test_cell_count_equals_grid_size(tmp_path):
    f = tmp_path / "f.csv"
    xs, ts = np.linspace(-1, 1, 17), np.linspace(0, 1, 9)
    write_field(f, xs, ts, np.arange(17 * 9, dtype=float))
    text = render_heatmap(f, tmp_path / "o.svg", colormap="magma", title="demo").read_text()
    assert len(fills(text)) == 17 * 9
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert "x [-1, 1]" in text and "t [0, 1]" in text


def test_irregular_grid_lists_missing(tmp_path):
    f = tmp_path / "f.csv"
    f.write_text("x,t,mean_u\n0,0,1\n0,1,1\n1,0,1\n")
    with pytest.raises(IrregularGridError) as info:
        render_heatmap(f, tmp_path / "o.svg")
    assert info.value.missing == [(1.0, 1.0)]
    assert "(1, 1)" in str(info.value)


def test_missing_column(tmp_path):
    f = tmp_path / "f.csv"
    write_field(f, [0, 1], [0, 1], [0, 1, 2, 3])
    with pytest.raises(KeyError):
        render_heatmap(f, tmp_path / "o.svg", column="std_u")


def test_axes_skip_constant_coordinate(tmp_path):
    f = tmp_path / "f.csv"
    rows = ["x,y,t,mean_u"] + [f"{x},{y},0.5,{x + y}" for x in range(3) for y in range(4)]
    f.write_text("\n".join(rows) + "\n")
    text = render_heatmap(f, tmp_path / "o.svg").read_text()
    assert "y [0, 3]" in text and len(fills(text)) == 12


def test_color_endpoints_and_clipping():
    for name, anchors in COLORMAPS.items():
        lo = "#{:02x}{:02x}{:02x}".format(*anchors[0])
        hi = "#{:02x}{:02x}{:02x}".format(*anchors[-1])
        assert color(0.0, 0.0, 1.0, name) == lo == color(-5.0, 0.0, 1.0, name)
        assert color(1.0, 0.0, 1.0, name) == hi == color(9.0, 0.0, 1.0, name)


def test_to_lattice_orders_axes():
    a = np.array([1.0, 0.0, 1.0, 0.0])
    b = np.array([0.0, 0.0, 1.0, 1.0])
    ua, ub, grid = to_lattice(a, b, np.array([10.0, 0.0, 11.0, 1.0]))
    np.testing.assert_array_equal(grid, [[0.0, 1.0], [10.0, 11.0]])
