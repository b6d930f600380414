"""SVG debug overlays: one rectangle per recognized block, coloured by kind."""
from pathlib import Path

from lxml import etree

SVG_NS = "http://www.w3.org/2000/svg"

KIND_COLORS = {
    "paragraph": "#2980b9",
    "table": "#c0392b",
    "heading": "#8e44ad",
    "page_header": "#7f8c8d",
    "page_footer": "#7f8c8d",
    "figure_caption": "#27ae60",
}


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def page_overlay_svg(doc, page_index: int, width: float, height: float) -> bytes:
    root = etree.Element(f"{{{SVG_NS}}}svg", nsmap={None: SVG_NS})
    root.set("width", _fmt(width))
    root.set("height", _fmt(height))
    root.set("viewBox", f"0 0 {_fmt(width)} {_fmt(height)}")
    etree.SubElement(root, f"{{{SVG_NS}}}rect", x="0", y="0", width=_fmt(width), height=_fmt(height),
                     fill="white", stroke="#bdc3c7")

    # a cross-page table is outlined on its first page only
    for block in (b for b in doc.blocks if b.page == page_index):
        box = block.bbox
        color = KIND_COLORS.get(block.kind, "#000000")
        rect = etree.SubElement(root, f"{{{SVG_NS}}}rect",
                                x=_fmt(box.x0), y=_fmt(box.y0),
                                width=_fmt(box.width), height=_fmt(box.height),
                                fill=color, stroke=color)
        rect.set("fill-opacity", "0.15")
        rect.set("data-kind", block.kind)
        rect.set("data-order", str(block.order))
        label = etree.SubElement(root, f"{{{SVG_NS}}}text", x=_fmt(box.x0), y=_fmt(max(box.y0 - 1, 8)),
                                 fill=color)
        label.set("font-size", "7")
        label.text = f"{block.order}:{block.kind}"
    return etree.tostring(root, xml_declaration=True, encoding="utf-8", pretty_print=True)


def write_overlays(doc, pages, out_dir, stem: str) -> list[Path]:
    """Writes <stem>.page<N>.svg for every page; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for page in pages:
        path = out_dir / f"{stem}.page{page.index}.svg"
        path.write_bytes(page_overlay_svg(doc, page.index, page.width, page.height))
        paths.append(path)
    return paths
