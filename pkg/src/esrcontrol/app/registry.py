"""
Gradient Method Registry

The @gradient_method decorator stores metadata on an estimator class and
registers it by name; the optimization engine dispatches through the
registry instead of branching on method names.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Type


@dataclass
class MethodInfo:
    """Metadata stored by the @gradient_method decorator."""
    name: str
    closed_loop: bool
    description: str = ""
    aliases: List[str] = field(default_factory=list)


_METHODS: Dict[str, Type] = {}


def gradient_method(
    name: Optional[str] = None,
    *,
    closed_loop: bool = True,
    description: str = "",
    aliases: Optional[List[str]] = None,
):
    """
    Register a gradient estimator class under ``name``.

    Args:
        name: Registry key (defaults to the lower-cased class name)
        closed_loop: Whether the method measures through the spectrometer
        description: One-line summary shown by the CLI
        aliases: Additional registry keys

    Returns:
        The class, with ``_method_info`` attached
    """
    def decorator(cls):
        doc = (cls.__doc__ or "").strip().splitlines()
        info = MethodInfo(
            name=name or cls.__name__.lower(),
            closed_loop=closed_loop,
            description=description or (doc[0] if doc else ""),
            aliases=list(aliases or []),
        )
        cls._method_info = info
        for key in [info.name, *info.aliases]:
            if key in _METHODS and _METHODS[key] is not cls:
                raise ValueError(f"gradient method {key!r} is already registered")
            _METHODS[key] = cls
        return cls

    return decorator


def get_method(name: str) -> Type:
    try:
        return _METHODS[name]
    except KeyError:
        raise ValueError(f"unknown gradient method {name!r}; available: {available_methods()}") from None


def available_methods() -> List[str]:
    return sorted({cls._method_info.name for cls in _METHODS.values()})
