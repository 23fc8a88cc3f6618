"""The symbol set, its feature associations, and description parsing.

The lexicon is the closed vocabulary shared by describer and identifier.
Symbol order is fixed at declaration and defines the global parameter
layout, so it must never be reordered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import UnknownSymbol

# Channel names of the per-object raw measurements (see features.RawFeatures).
X_POS = "x_pos"
Y_POS = "y_pos"
WIDTH = "width"
HEIGHT = "height"
SIZE = "size"
HUE = "hue"
LIGHT = "light"

CHANNELS = (X_POS, Y_POS, WIDTH, HEIGHT, SIZE, HUE, LIGHT)

# Encoded feature width per channel: scalar channels emit [raw, zscore],
# the circular hue channel emits a unit phasor [cos, sin].
_CHANNEL_DIM = 2


@dataclass(frozen=True)
class Symbol:
    """One lexicon entry: a lowercase token tied to raw-feature channels."""

    name: str
    index: int
    channels: tuple[str, ...]

    @property
    def dim(self) -> int:
        """Length of this symbol's encoded feature vector."""
        return _CHANNEL_DIM * len(self.channels)


@dataclass(frozen=True)
class Lexicon:
    """Ordered symbol set with a fixed global parameter layout."""

    symbols: tuple[Symbol, ...]
    _by_name: dict = field(default_factory=dict, repr=False, compare=False)
    _offsets: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        names = [s.name for s in self.symbols]
        if len(set(names)) != len(names):
            raise ValueError("duplicate symbol names in lexicon")
        for i, sym in enumerate(self.symbols):
            if sym.index != i:
                raise ValueError(f"symbol {sym.name!r} has index {sym.index}, expected {i}")
            if not sym.channels:
                raise ValueError(f"symbol {sym.name!r} has no associated channels")
            for ch in sym.channels:
                if ch not in CHANNELS:
                    raise ValueError(f"symbol {sym.name!r} references unknown channel {ch!r}")
        offsets = []
        total = 0
        for sym in self.symbols:
            offsets.append(total)
            total += sym.dim
        object.__setattr__(self, "_by_name", {s.name: s for s in self.symbols})
        object.__setattr__(self, "_offsets", tuple(offsets))

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def lookup(self, name: str) -> Symbol:
        """Find a symbol by (case-insensitive) name; raises UnknownSymbol."""
        sym = self._by_name.get(name.lower())
        if sym is None:
            raise UnknownSymbol(name)
        return sym

    def offset(self, sym: Symbol) -> int:
        """Start of this symbol's block in the flat parameter vector."""
        return self._offsets[sym.index]

    @property
    def total_dim(self) -> int:
        """Length of the flat parameter vector over all symbols."""
        return self._offsets[-1] + self.symbols[-1].dim if self.symbols else 0

    def names(self) -> list[str]:
        return [s.name for s in self.symbols]


@dataclass(frozen=True)
class Description:
    """An unordered subset of lexicon symbols, read conjunctively.

    The empty description is valid and carries no information.
    """

    symbols: frozenset[int]

    def __len__(self) -> int:
        return len(self.symbols)

    def sorted_indices(self) -> list[int]:
        return sorted(self.symbols)


def default_lexicon() -> Lexicon:
    """The 15-symbol blocks-world lexicon with its channel associations.

    Location symbols read the position channels, geometry symbols read
    width/height/size, color symbols read the hue phasor, and "white"
    reads the lightness channel.
    """
    spec = [
        ("left", (X_POS,)),
        ("right", (X_POS,)),
        ("top", (Y_POS,)),
        ("bottom", (Y_POS,)),
        ("thin", (WIDTH,)),
        ("wide", (WIDTH,)),
        ("short", (HEIGHT,)),
        ("tall", (HEIGHT,)),
        ("small", (SIZE,)),
        ("big", (SIZE,)),
        ("red", (HUE,)),
        ("green", (HUE,)),
        ("blue", (HUE,)),
        ("yellow", (HUE,)),
        ("white", (LIGHT,)),
    ]
    return Lexicon(tuple(Symbol(name, i, ch) for i, (name, ch) in enumerate(spec)))


def parse_description(tokens: list[str], lex: Lexicon) -> Description:
    """Turn whitespace-split tokens into a Description.

    Matching is case-insensitive and duplicates collapse. Raises
    UnknownSymbol for any token outside the lexicon.
    """
    return Description(frozenset(lex.lookup(tok).index for tok in tokens))


def render_description(desc: Description, lex: Lexicon) -> list[str]:
    """Symbol names of a description in lexicon order."""
    return [lex.symbols[i].name for i in desc.sorted_indices()]
