"""Static SVG charts written as plain text, so outputs diff cleanly and are byte-stable."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

MONTH_NAMES = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


def _f(x):
    return f"{x:.2f}"


def _svg(width, height, body):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">\n')
    return head + f'<rect width="{width}" height="{height}" fill="white"/>\n' + "".join(body) + "</svg>\n"


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    if span <= 0:
        span = abs(hi) or 1.0
        lo, hi = lo - span / 2, hi + span / 2
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = np.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(float(t), 12))
        t += step
    return ticks


def monthly_effects_svg(months, means, ses, title="Mean effect on the probability of survival",
                        shaded=(), width=640, height=400):
    """Point-and-line chart of monthly mean effects with 95% intervals.

    ``shaded`` lists months drawn on a grey band (the treated window).
    """
    months = [int(m) for m in months]
    means = np.asarray(means, dtype=float)
    ses = np.asarray(ses, dtype=float)
    lo = float(min(0.0, np.min(means - 1.96 * ses)))
    hi = float(max(0.0, np.max(means + 1.96 * ses)))
    ticks = _nice_ticks(lo, hi)
    lo, hi = min(lo, ticks[0]), max(hi, ticks[-1])
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    step = pw / max(len(months), 1)

    def X(i):
        return left + step * (i + 0.5)

    def Y(v):
        return top + ph * (hi - v) / (hi - lo)

    body = [f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>\n']
    for i, m in enumerate(months):
        if m in shaded:
            body.append(f'<rect x="{_f(left + step * i)}" y="{top}" width="{_f(step)}" height="{ph}" '
                        f'fill="#eeeeee"/>\n')
    for t in ticks:
        body.append(f'<line x1="{left}" y1="{_f(Y(t))}" x2="{left + pw}" y2="{_f(Y(t))}" stroke="#dddddd"/>\n')
        body.append(f'<text x="{left - 6}" y="{_f(Y(t) + 4)}" text-anchor="end">{t:g}</text>\n')
    body.append(f'<line x1="{left}" y1="{_f(Y(0))}" x2="{left + pw}" y2="{_f(Y(0))}" stroke="black" '
                f'stroke-dasharray="4 3"/>\n')
    body.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>\n')
    pts = " ".join(f"{_f(X(i))},{_f(Y(v))}" for i, v in enumerate(means))
    body.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e79" stroke-width="2"/>\n')
    for i, (m, v, s) in enumerate(zip(months, means, ses)):
        x = X(i)
        body.append(f'<line x1="{_f(x)}" y1="{_f(Y(v - 1.96 * s))}" x2="{_f(x)}" y2="{_f(Y(v + 1.96 * s))}" '
                    f'stroke="#1f4e79"/>\n')
        body.append(f'<circle cx="{_f(x)}" cy="{_f(Y(v))}" r="4" fill="#1f4e79"/>\n')
        label = MONTH_NAMES[m - 1] if 1 <= m <= 12 else str(m)
        body.append(f'<text x="{_f(x)}" y="{top + ph + 18}" text-anchor="middle">{label}</text>\n')
    body.append(f'<text x="16" y="{_f(top + ph / 2)}" text-anchor="middle" '
                f'transform="rotate(-90 16 {_f(top + ph / 2)})">mean SAM - SUM</text>\n')
    return _svg(width, height, body)


def tree_svg(tree, title="Regression tree of the log effect", box_w=170, box_h=54, gap_x=14, gap_y=46):
    """Layered drawing of an EffectTree: leaves spread evenly, parents centred over children."""
    nodes = tree.nodes
    pos = {}
    counter = [0]

    def place(i):
        nd = nodes[i]
        if nd.is_leaf:
            pos[i] = counter[0]
            counter[0] += 1
        else:
            place(nd.left)
            place(nd.right)
            pos[i] = (pos[nd.left] + pos[nd.right]) / 2.0

    place(0)
    n_leaves = max(counter[0], 1)
    depth = max(nd.depth for nd in nodes)
    width = int(40 + n_leaves * (box_w + gap_x))
    height = int(60 + (depth + 1) * (box_h + gap_y))

    def cx(i):
        return 20 + pos[i] * (box_w + gap_x) + box_w / 2.0

    def cy(i):
        return 50 + nodes[i].depth * (box_h + gap_y)

    body = [f'<text x="{width / 2:.2f}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>\n']
    for nd in nodes:
        if nd.is_leaf:
            continue
        for child, went_left in ((nd.left, True), (nd.right, False)):
            x1, y1 = cx(nd.id), cy(nd.id) + box_h
            x2, y2 = cx(child), cy(child)
            body.append(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="#555555"/>\n')
            label = escape(_short(nd.split.describe(went_left)))
            body.append(f'<text x="{_f((x1 + x2) / 2)}" y="{_f((y1 + y2) / 2)}" text-anchor="middle" '
                        f'font-size="10" fill="#333333">{label}</text>\n')
    for nd in nodes:
        x, y = cx(nd.id) - box_w / 2.0, cy(nd.id)
        fill = "#dbe8f5" if nd.is_leaf else "#f4f4f4"
        body.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{box_w}" height="{box_h}" rx="4" fill="{fill}" '
                    f'stroke="#333333"/>\n')
        body.append(f'<text x="{_f(x + box_w / 2)}" y="{_f(y + 20)}" text-anchor="middle">'
                    f'mean {nd.mean:.4f}</text>\n')
        body.append(f'<text x="{_f(x + box_w / 2)}" y="{_f(y + 38)}" text-anchor="middle" font-size="10">'
                    f'n={nd.n} ({100 * nd.share:.1f}%)</text>\n')
    return _svg(width, height, body)


def _short(text, limit=40):
    return text if len(text) <= limit else text[: limit - 3] + "..."
