"""
esrcontrol UI - SVG tags

Minimal element builder for standalone SVG documents. Positional mappings
merge into attributes, other positional arguments become children, and
text is escaped on render.
"""

from functools import cached_property
from html import escape
from typing import Any, Mapping

from fastcore.basics import partition, risinstance

svg_tags = "Svg G Line Polyline Rect Circle Text Title Desc Path"

_specials = set("@.-!~:[](){}$%^&*+=|/?<>,`")


def attrmap(o: str) -> str:
    if _specials & set(o):
        return o
    o = dict(cls="class", _class="class", klass="class").get(o, o)
    return o if o == "_" else o.lstrip("_").replace("_", "-")


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.2f}".rstrip("0").rstrip(".")
    return escape(str(v), quote=True)


class CaseTag:
    """An SVG element with case-sensitive name, attributes and children."""

    def __init__(self, *args, **kwargs):
        ds, c = partition(args, risinstance(Mapping))
        for d in ds:
            kwargs = {**kwargs, **d}
        self._name = self.__class__.__name__
        self._children = c
        self._attrs = {k: v for k, v in kwargs.items() if v is not None}

    @property
    def name(self) -> str:
        return self._name[0].lower() + self._name[1:]

    @property
    def attrs(self) -> str:
        if not self._attrs:
            return ""
        return " " + " ".join(f'{attrmap(k)}="{_fmt(v)}"' for k, v in self._attrs.items())

    @cached_property
    def children(self) -> str:
        return "".join(c.render() if isinstance(c, CaseTag) else escape(str(c)) for c in self._children)

    def render(self) -> str:
        if not self._children:
            return f"<{self.name}{self.attrs}/>"
        return f"<{self.name}{self.attrs}>{self.children}</{self.name}>"

    def __repr__(self) -> str:
        return self.render()

    __str__ = __repr__


for class_name in svg_tags.split():
    globals()[class_name] = type(class_name, (CaseTag,), {
        "__doc__": f"""Object that represents the `<{class_name[0].lower() + class_name[1:]}>` SVG element.""",
    })


def svg_document(root: CaseTag) -> str:
    """Standalone SVG file contents for ``root``."""
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + root.render() + "\n"


__all__ = ["CaseTag", "attrmap", "svg_document", *svg_tags.split()]
