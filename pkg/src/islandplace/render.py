"""SVG rendering of placements: device columns, blockages, instances and
the most critical paths."""

from .model import CELL_KINDS

COLUMN_FILL = {
    "CLB": "#dce9f5",
    "SLICEM": "#cfe3d2",
    "DSP": "#f5e6c8",
    "BRAM": "#e8d5ee",
    "IO": "#d8d8d8",
}

KIND_FILL = {
    "LUT": "#1f77b4",
    "FF": "#2ca02c",
    "CARRY": "#ff7f0e",
    "MUX": "#17becf",
    "LUTRAM": "#8c564b",
    "DSP": "#d62728",
    "BRAM": "#9467bd",
    "IO": "#7f7f7f",
}

PATH_COLORS = ("#e41a1c", "#ff6600", "#aa00aa")


def render_svg(netlist, device, placement, out_path, graph=None, top_k=3,
               scale=16):
    """Write an SVG of the placement; returns the path written."""
    from .dplace import extract_critical_paths

    w = device.width * scale
    h = device.height * scale

    def sx(x):
        return x * scale

    def sy(y):
        return h - y * scale  # y grows upward

    parts = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
        f'height="{h}" viewBox="0 0 {w} {h}">')
    parts.append(f'<rect x="0" y="0" width="{w}" height="{h}" '
                 f'fill="#ffffff" stroke="#000000"/>')
    for col in device.columns:
        fill = COLUMN_FILL.get(col.kind, "#eeeeee")
        parts.append(
            f'<rect x="{sx(col.x)}" y="0" width="{scale}" height="{h}" '
            f'fill="{fill}"/>')
    for r in device.blockages:
        parts.append(
            f'<rect x="{sx(r.x0)}" y="{sy(r.y1)}" '
            f'width="{sx(r.x1 - r.x0)}" height="{sx(r.y1 - r.y0)}" '
            f'fill="#555555" fill-opacity="0.7"/>')
    radius = max(1.5, scale * 0.15)
    for v in range(netlist.n_instances):
        kind = CELL_KINDS[netlist.kind_code[v]]
        fill = KIND_FILL[kind]
        parts.append(
            f'<circle cx="{sx(placement.x[v]):.1f}" '
            f'cy="{sy(placement.y[v]):.1f}" r="{radius:.1f}" '
            f'fill="{fill}"/>')
    if graph is not None and graph.metrics is not None and top_k > 0:
        for i, path in enumerate(extract_critical_paths(graph, top_k)):
            color = PATH_COLORS[i % len(PATH_COLORS)]
            pts = " ".join(
                f"{sx(placement.x[v]):.1f},{sy(placement.y[v]):.1f}"
                for v in path.vertices)
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="{color}" stroke-width="2"/>')
    parts.append("</svg>")
    with open(out_path, "w") as f:
        f.write("\n".join(parts))
    return out_path
