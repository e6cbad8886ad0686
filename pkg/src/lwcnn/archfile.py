"""Plain-text architecture descriptions, one layer per line.

Grammar (blank lines and `#` comments are ignored; tokens are
whitespace-separated):

    model <name>                    optional, defaults to "custom"
    note <free text>                optional, repeatable
    input <H>x<W>x<C>               required before the first layer
    conv     k=K [s=S] [pad=same|valid] ch=IN:OUT [bn] [relu] [name=ID]
    dsc      k=K [s=S] [pad=same|valid] ch=IN:OUT [bn] [relu] [name=ID]
    bottleneck ch=IN:OUT [k=K] [s=S] [relu] [name=ID]
    maxpool  [k=2] [s=2] [name=ID]
    avgpool  k=K [s=S] [name=ID]
    dropout  [name=ID]
    flatten  [name=ID]
    classifier sigmoid|softmax ch=IN:OUT [name=ID]

Unnamed weighted layers are numbered layer1, layer2, ... in order; other
kinds get kind-derived names. `render_arch` emits the canonical form, and
`parse_arch(render_arch(g)) == g` for any graph this module can express.
Parsing checks line syntax only; run `validate` on the result for the
structural rules.
"""

from __future__ import annotations

from .graph import CLASSIFIER_KINDS, GraphError, LayerSpec, ModelGraph

__all__ = ["parse_arch", "render_arch"]

_OPTION_KEYS = {
    "conv": {"k", "s", "pad", "ch", "name"},
    "dsc": {"k", "s", "pad", "ch", "name"},
    "bottleneck": {"k", "s", "ch", "name"},
    "maxpool": {"k", "s", "name"},
    "avgpool": {"k", "s", "name"},
    "dropout": {"name"},
    "flatten": {"name"},
    "classifier": {"ch", "name"},
}
_FLAG_WORDS = {
    "conv": {"bn", "relu"},
    "dsc": {"bn", "relu"},
    "bottleneck": {"bn", "relu"},
    "classifier": set(CLASSIFIER_KINDS),
}
_AUTO_PREFIX = {"maxpool": "pool", "avgpool": "avgpool", "dropout": "drop"}


def _parse_dims(token: str, lineno: int) -> tuple[int, int, int]:
    parts = token.lower().split("x")
    if len(parts) != 3:
        raise GraphError(f"line {lineno}: input size must look like 224x224x3, got {token!r}")
    try:
        h, w, c = (int(p) for p in parts)
    except ValueError:
        raise GraphError(f"line {lineno}: input size must be integers, got {token!r}") from None
    return h, w, c


def _parse_channels(value: str, lineno: int) -> tuple[int, int]:
    parts = value.split(":")
    if len(parts) != 2:
        raise GraphError(f"line {lineno}: ch must look like IN:OUT, got {value!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise GraphError(f"line {lineno}: ch must be integers, got {value!r}") from None


def _layer_from_line(head: str, tokens: list[str], lineno: int, counters: dict[str, int]) -> LayerSpec:
    opts: dict[str, str] = {}
    flags: set[str] = set()
    for token in tokens:
        if "=" in token:
            key, _, value = token.partition("=")
            key = key.lower()
            if key in opts:
                raise GraphError(f"line {lineno}: repeated option {key!r}")
            opts[key] = value
        else:
            flags.add(token.lower())

    allowed_opts = _OPTION_KEYS[head]
    for key in opts:
        if key not in allowed_opts:
            raise GraphError(f"line {lineno}: {head} does not take option {key!r}")
    allowed_flags = _FLAG_WORDS.get(head, set())
    for flag in flags:
        if flag not in allowed_flags:
            raise GraphError(f"line {lineno}: {head} does not take flag {flag!r}")

    fields: dict[str, object] = {"kind": head}
    try:
        if "k" in opts:
            fields["kernel"] = int(opts["k"])
        if "s" in opts:
            fields["stride"] = int(opts["s"])
    except ValueError:
        raise GraphError(f"line {lineno}: k= and s= need integers") from None
    if "pad" in opts:
        fields["padding"] = opts["pad"].lower()
    if "ch" in opts:
        fields["in_channels"], fields["out_channels"] = _parse_channels(opts["ch"], lineno)
    if head == "maxpool":
        fields.setdefault("kernel", 2)
        fields.setdefault("stride", 2)
    fields["has_batchnorm"] = "bn" in flags
    fields["has_relu"] = "relu" in flags
    if head == "classifier":
        chosen = sorted(flags & set(CLASSIFIER_KINDS))
        if len(chosen) != 1:
            raise GraphError(
                f"line {lineno}: classifier needs exactly one of {CLASSIFIER_KINDS}"
            )
        fields["classifier_kind"] = chosen[0]

    if "name" in opts:
        fields["name"] = opts["name"]
        if head in ("conv", "dsc", "bottleneck"):
            counters["weighted"] += 1
    elif head in ("conv", "dsc", "bottleneck"):
        counters["weighted"] += 1
        fields["name"] = f"layer{counters['weighted']}"
    elif head in _AUTO_PREFIX:
        counters[head] += 1
        fields["name"] = f"{_AUTO_PREFIX[head]}{counters[head]}"
    else:
        fields["name"] = head

    try:
        return LayerSpec(**fields)  # type: ignore[arg-type]
    except GraphError as exc:
        raise GraphError(f"line {lineno}: {exc}") from None


def parse_arch(text: str) -> ModelGraph:
    """Parse a text description into a ModelGraph; errors name the offending line."""
    name = "custom"
    notes: list[str] = []
    input_shape: tuple[int, int, int] | None = None
    layers: list[LayerSpec] = []
    counters = {"weighted": 0, "maxpool": 0, "avgpool": 0, "dropout": 0}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0].lower()
        if head == "model":
            if len(tokens) < 2:
                raise GraphError(f"line {lineno}: model directive needs a name")
            name = " ".join(tokens[1:])
        elif head == "note":
            if len(tokens) < 2:
                raise GraphError(f"line {lineno}: note directive needs text")
            notes.append(" ".join(tokens[1:]))
        elif head == "input":
            if len(tokens) != 2:
                raise GraphError(f"line {lineno}: input directive takes one HxWxC token")
            input_shape = _parse_dims(tokens[1], lineno)
        elif head in _OPTION_KEYS:
            if input_shape is None:
                raise GraphError(f"line {lineno}: input size must be declared before layers")
            layers.append(_layer_from_line(head, tokens[1:], lineno, counters))
        else:
            raise GraphError(f"line {lineno}: unknown directive {head!r}")

    if input_shape is None:
        raise GraphError("missing input directive")
    if not layers:
        raise GraphError("no layers declared")
    return ModelGraph(name=name, input_shape=input_shape, layers=tuple(layers), notes=tuple(notes))


def render_arch(g: ModelGraph) -> str:
    """Canonical text form; parses back to an equal graph."""
    h, w, c = g.input_shape
    lines = [f"model {g.name}"]
    lines += [f"note {note}" for note in g.notes]
    lines.append(f"input {h}x{w}x{c}")
    for layer in g.layers:
        if layer.kind in ("conv", "dsc"):
            parts = [layer.kind, f"k={layer.kernel}", f"s={layer.stride}",
                     f"pad={layer.padding}", f"ch={layer.in_channels}:{layer.out_channels}"]
            if layer.has_batchnorm:
                parts.append("bn")
            if layer.has_relu:
                parts.append("relu")
        elif layer.kind == "bottleneck":
            parts = ["bottleneck", f"k={layer.kernel}", f"s={layer.stride}",
                     f"ch={layer.in_channels}:{layer.out_channels}"]
            if layer.has_batchnorm:
                parts.append("bn")
            if layer.has_relu:
                parts.append("relu")
        elif layer.kind == "maxpool":
            parts = ["maxpool", f"k={layer.kernel}", f"s={layer.stride}"]
        elif layer.kind == "avgpool":
            parts = ["avgpool", f"k={layer.kernel}", f"s={layer.stride}"]
        elif layer.kind == "classifier":
            parts = ["classifier", layer.classifier_kind,
                     f"ch={layer.in_channels}:{layer.out_channels}"]
        else:
            parts = [layer.kind]
        parts.append(f"name={layer.name}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"
