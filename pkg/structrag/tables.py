"""
Table detection and structure recognition.

Two kinds of candidate regions are found on a page:

* ruled: a stack of long horizontal rules (optionally with vertical rules)
  enclosing multi-column text;
* borderless: three or more consecutive text rows whose cells share at
  least two x-alignment anchors.

Structure is recovered from the rules when the region is fully gridded,
otherwise from baseline clusters (rows) and alignment anchors (columns).
"""
import logging
from dataclasses import dataclass, field

from .config import LayoutConfig
from .doc_model import BoundingBox, Segment, Table, TableCell
from .errors import DegenerateTableError

logger = logging.getLogger(__name__)

FULL_WIDTH_RULE = 0.95  # rules at least this share of the table width are row separators


@dataclass
class TableRegion:
    page: int
    bbox: BoundingBox
    lines: list = field(default_factory=list)
    h_rules: list = field(default_factory=list)
    v_rules: list = field(default_factory=list)
    kind: str = "borderless"


def _cluster(values, tol):
    """Groups sorted values that sit within `tol` of their neighbour; returns group means."""
    groups = []
    for v in sorted(values):
        if groups and v - groups[-1][-1] <= tol:
            groups[-1].append(v)
        else:
            groups.append([v])
    return [sum(g) / len(g) for g in groups]


def group_rows(lines, cfg: LayoutConfig):
    """Baseline clusters of line fragments, top to bottom, each sorted by x0."""
    rows = []
    for line in sorted(lines, key=lambda l: (l.baseline_y, l.bbox.x0)):
        if rows:
            anchor = rows[-1][0]
            if abs(line.baseline_y - anchor.baseline_y) <= cfg.line_merge_tolerance * max(line.font_size, anchor.font_size):
                rows[-1].append(line)
                continue
        rows.append([line])
    return [sorted(r, key=lambda l: l.bbox.x0) for r in rows]


def _shared_anchors(anchors, xs, tol):
    return [a for a in anchors if any(abs(a - x) <= tol for x in xs)]


def _is_tabular_row(row, cfg: LayoutConfig) -> bool:
    if len(row) < 2:
        return False
    words = sum(l.word_count for l in row) / len(row)
    return words <= cfg.table_cell_max_words


def _lines_inside(lines, box: BoundingBox, tol: float):
    return [l for l in lines if box.contains_point(*l.bbox.center, tol=tol)]


def merge_collinear(segments, tol):
    """Joins touching collinear segments (e.g. the edges of adjacent cell boxes) into single rules."""
    merged = []
    for orientation in ("h", "v"):
        segs = [s for s in segments if s.orientation == orientation]
        lanes = []
        for s in sorted(segs, key=lambda s: s.position):
            if lanes and s.position - lanes[-1][-1].position <= tol:
                lanes[-1].append(s)
            else:
                lanes.append([s])
        for lane in lanes:
            pos = sum(s.position for s in lane) / len(lane)
            spans = sorted((s.x0, s.x1) if orientation == "h" else (s.y0, s.y1) for s in lane)
            joined = [list(spans[0])]
            for lo, hi in spans[1:]:
                if lo <= joined[-1][1] + tol:
                    joined[-1][1] = max(joined[-1][1], hi)
                else:
                    joined.append([lo, hi])
            for lo, hi in joined:
                if orientation == "h":
                    merged.append(Segment(lo, pos, hi, pos, "h"))
                else:
                    merged.append(Segment(pos, lo, pos, hi, "v"))
    return merged


def _ruled_regions(lines, segments, cfg: LayoutConfig):
    segments = merge_collinear(segments, cfg.alignment_cluster_tolerance / 2)
    tol = cfg.alignment_cluster_tolerance
    min_rule = 3 * cfg.column_gap_min
    rules = sorted((s for s in segments if s.orientation == "h" and s.length >= min_rule),
                   key=lambda s: (s.position, s.x0))
    groups = []
    for rule in rules:
        if groups:
            group = groups[-1]
            gx0 = min(r.x0 for r in group)
            gx1 = max(r.x1 for r in group)
            overlap = min(rule.x1, gx1) - max(rule.x0, gx0)
            close = rule.position - group[-1].position <= cfg.rule_gap_max
            if close and overlap >= cfg.ruling_min_length * max(rule.length, gx1 - gx0):
                group.append(rule)
                continue
        groups.append([rule])

    regions = []
    for group in groups:
        if len(group) < 2:
            continue
        box = BoundingBox(min(r.x0 for r in group), group[0].position,
                          max(r.x1 for r in group), group[-1].position)
        inside = _lines_inside(lines, box, tol)
        if not any(len(row) >= 2 for row in group_rows(inside, cfg)):
            # a boxed paragraph, not a table
            continue
        h_rules = [s for s in segments if s.orientation == "h"
                   and box.y0 - tol <= s.position <= box.y1 + tol
                   and s.x1 >= box.x0 - tol and s.x0 <= box.x1 + tol]
        v_rules = [s for s in segments if s.orientation == "v"
                   and box.x0 - tol <= s.position <= box.x1 + tol
                   and s.y1 >= box.y0 - tol and s.y0 <= box.y1 + tol]
        page = inside[0].page if inside else 0
        regions.append(TableRegion(page=page, bbox=box, lines=inside,
                                   h_rules=h_rules, v_rules=v_rules, kind="ruled"))
    return regions


def _borderless_regions(lines, cfg: LayoutConfig):
    tol = cfg.alignment_cluster_tolerance
    regions = []
    run, anchors = [], []

    def close_run():
        if len(run) >= 3:
            members = [l for row in run for l in row]
            regions.append(TableRegion(page=members[0].page,
                                       bbox=BoundingBox.union(l.bbox for l in members),
                                       lines=members, kind="borderless"))

    for row in group_rows(lines, cfg):
        if not _is_tabular_row(row, cfg):
            close_run()
            run, anchors = [], []
            continue
        xs = [l.bbox.x0 for l in row]
        if run:
            prev = run[-1]
            height = max(l.font_size for l in prev + row)
            near = row[0].baseline_y - prev[0].baseline_y <= 3 * height
            shared = _shared_anchors(anchors, xs, tol)
            if near and len(shared) >= 2:
                run.append(row)
                anchors = shared
                continue
            close_run()
        run, anchors = [row], xs
    close_run()
    return regions


def detect_tables(lines, ruling_segments, cfg: LayoutConfig):
    """
    Candidate table regions on one page. Ruled regions win over borderless
    ones; returned regions never overlap.
    """
    ruled = _ruled_regions(lines, ruling_segments, cfg)
    taken = {id(l) for region in ruled for l in region.lines}
    free = [l for l in lines if id(l) not in taken]
    borderless = [r for r in _borderless_regions(free, cfg)
                  if not any(r.bbox.intersects(o.bbox) for o in ruled)]
    regions = sorted(ruled + borderless, key=lambda r: (r.bbox.y0, r.bbox.x0))
    logger.debug("Page table candidates: %d ruled, %d borderless", len(ruled), len(borderless))
    return regions


def _cell_text(lines, box: BoundingBox) -> str:
    members = [l for l in lines if box.contains_point(*l.bbox.center)]
    members.sort(key=lambda l: (l.baseline_y, l.bbox.x0))
    return " ".join(l.text for l in members)


def _is_gridded(region: TableRegion, cfg: LayoutConfig) -> bool:
    tol = 2 * cfg.alignment_cluster_tolerance
    xs = _cluster([s.position for s in region.v_rules], cfg.alignment_cluster_tolerance)
    ys = _cluster([s.position for s in region.h_rules], cfg.alignment_cluster_tolerance)
    return (len(xs) >= 2 and len(ys) >= 2
            and abs(xs[0] - region.bbox.x0) <= tol and abs(xs[-1] - region.bbox.x1) <= tol)


def _grid_structure(region: TableRegion, cfg: LayoutConfig) -> Table:
    tol = cfg.alignment_cluster_tolerance
    xs = _cluster([s.position for s in region.v_rules], tol)
    ys = _cluster([s.position for s in region.h_rules], tol)
    n_rows, n_cols = len(ys) - 1, len(xs) - 1
    if n_rows < 1 or n_cols < 1:
        raise DegenerateTableError(f"ruled region yields a {n_rows}x{n_cols} grid")

    def v_covered(k, r):
        mid = (ys[r] + ys[r + 1]) / 2
        return any(abs(s.position - xs[k]) <= tol and s.y0 - tol <= mid <= s.y1 + tol for s in region.v_rules)

    def h_covered(k, c):
        mid = (xs[c] + xs[c + 1]) / 2
        return any(abs(s.position - ys[k]) <= tol and s.x0 - tol <= mid <= s.x1 + tol for s in region.h_rules)

    owner = [[False] * n_cols for _ in range(n_rows)]
    cells = []
    for r in range(n_rows):
        for c in range(n_cols):
            if owner[r][c]:
                continue
            cs = 1
            while c + cs < n_cols and not owner[r][c + cs] and not v_covered(c + cs, r):
                cs += 1
            rs = 1
            while (r + rs < n_rows
                   and not any(owner[r + rs][cc] for cc in range(c, c + cs))
                   and not any(h_covered(r + rs, cc) for cc in range(c, c + cs))):
                rs += 1
            for rr in range(r, r + rs):
                for cc in range(c, c + cs):
                    owner[rr][cc] = True
            box = BoundingBox(xs[c], ys[r], xs[c + cs], ys[r + rs])
            cells.append(TableCell(r, c, rs, cs, _cell_text(region.lines, box), box))
    return Table(cells=tuple(cells), n_rows=n_rows, n_cols=n_cols,
                 bbox=region.bbox, pages=(region.page,))


def _column_bounds(rows, region: TableRegion):
    full = max(len(r) for r in rows)
    full_rows = [r for r in rows if len(r) == full]
    lefts = [min(r[i].bbox.x0 for r in full_rows) for i in range(full)]
    rights = [max(r[i].bbox.x1 for r in full_rows) for i in range(full)]
    bounds = []
    for i in range(full):
        lo = region.bbox.x0 if i == 0 else bounds[-1][1]
        if i == full - 1:
            hi = region.bbox.x1
        elif rights[i] < lefts[i + 1]:
            hi = (rights[i] + lefts[i + 1]) / 2
        else:
            hi = lefts[i + 1]
        bounds.append((lo, max(lo, hi)))
    return bounds


def _column_of(x, bounds):
    for i, (lo, hi) in enumerate(bounds):
        if x < hi:
            return i
    return len(bounds) - 1


def _underline_columns(frag, next_top, region, bounds, cfg):
    """Columns covered by a partial rule drawn directly under `frag`, if any."""
    tol = cfg.alignment_cluster_tolerance
    cx = frag.bbox.center[0]
    width = region.bbox.width or 1.0
    below = [s for s in region.h_rules
             if frag.bbox.y1 - 1 <= s.position <= next_top + 1
             and s.x0 - tol <= cx <= s.x1 + tol
             and s.length < FULL_WIDTH_RULE * width]
    if not below:
        return None
    rule = min(below, key=lambda s: s.position)
    return [i for i, (lo, hi) in enumerate(bounds) if rule.x0 - tol <= (lo + hi) / 2 <= rule.x1 + tol]


def _run_around(cols, anchor):
    """The maximal run of consecutive columns containing (or nearest to) `anchor`."""
    runs = []
    for c in sorted(cols):
        if runs and c == runs[-1][-1] + 1:
            runs[-1].append(c)
        else:
            runs.append([c])
    if not runs:
        return None
    return min(runs, key=lambda run: 0 if run[0] <= anchor <= run[-1] else min(abs(anchor - run[0]), abs(anchor - run[-1])))


def _text_structure(region: TableRegion, cfg: LayoutConfig) -> Table:
    if not region.lines:
        raise DegenerateTableError("region holds no text")
    rows = group_rows(region.lines, cfg)
    bounds = _column_bounds(rows, region)
    n_rows, n_cols = len(rows), len(bounds)
    if n_rows < 1 or n_cols < 1:
        raise DegenerateTableError(f"text region yields a {n_rows}x{n_cols} grid")

    cells = []
    for r, row in enumerate(rows):
        band_y0 = min(l.bbox.y0 for l in row)
        band_y1 = max(l.bbox.y1 for l in row)
        next_top = min(l.bbox.y0 for l in rows[r + 1]) if r + 1 < n_rows else region.bbox.y1
        starts = [_column_of(f.bbox.x0, bounds) for f in row]

        placed = []  # [start, end, [fragments]]
        for i, frag in enumerate(row):
            start = starts[i]
            end = max(start, _column_of(frag.bbox.x1 - 0.5, bounds))
            covered = _underline_columns(frag, next_top, region, bounds, cfg)
            if covered:
                others = set(starts[:i] + starts[i + 1:])
                run = _run_around([c for c in covered if c not in others], start)
                if run:
                    start, end = min(start, run[0]), max(end, run[-1])
            if placed and start <= placed[-1][1]:
                if start == placed[-1][0] or end <= placed[-1][1]:
                    placed[-1][2].append(frag)
                    placed[-1][1] = max(placed[-1][1], end)
                    continue
                start = placed[-1][1] + 1
            placed.append([start, max(start, end), [frag]])

        used = set()
        for start, end, frags in placed:
            end = min(end, n_cols - 1)
            used.update(range(start, end + 1))
            box = BoundingBox(min(f.bbox.x0 for f in frags), band_y0, max(f.bbox.x1 for f in frags), band_y1)
            text = " ".join(f.text for f in frags)
            cells.append(TableCell(r, start, 1, end - start + 1, text, box))
        for c in range(n_cols):
            if c not in used:
                cells.append(TableCell(r, c, 1, 1, "", BoundingBox(bounds[c][0], band_y0, bounds[c][1], band_y1)))

    cells.sort(key=lambda c: (c.row, c.col))
    return Table(cells=tuple(cells), n_rows=n_rows, n_cols=n_cols,
                 bbox=region.bbox, pages=(region.page,))


def recognize_table_structure(region: TableRegion, cfg: LayoutConfig) -> Table:
    """
    Recovers the cell grid of a candidate region. Raises DegenerateTableError
    when no grid can be formed; callers demote such regions to paragraphs.
    """
    if _is_gridded(region, cfg):
        return _grid_structure(region, cfg)
    return _text_structure(region, cfg)


def column_signature(table: Table):
    """Left edge of every column, for matching a table continued on the next page."""
    sig = []
    for c in range(table.n_cols):
        column = [cell for cell in table.cells if cell.col == c]
        filled = [cell.bbox.x0 for cell in column if cell.text.strip()]
        starts = filled or [cell.bbox.x0 for cell in column]
        sig.append(min(starts) if starts else None)
    return sig


def signatures_match(a, b, tol: float) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if (x is None) != (y is None):
            return False
        if x is not None and abs(x - y) > tol:
            return False
    return True
