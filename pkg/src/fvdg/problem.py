"""PDE problem definitions: coefficients, boundary data, benchmark catalogue.

The model is  -div(K grad u) + div(beta u) + c u = f  with Dirichlet data
g_D on tagged boundary pieces and homogeneous Neumann elsewhere.  All
coefficient fields are vectorized callables of (x, y); `beta` returns an
array with a trailing component axis of length 2.
"""

import ast
import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Domain

__all__ = [
    "ProblemSpec",
    "ProblemError",
    "BENCHMARKS",
    "make_benchmark",
    "evaluate_coefficients",
    "parse_expression",
    "load_problem",
    "constant_field",
    "constant_vector_field",
]


class ProblemError(Exception):
    pass


def constant_field(value):
    v = float(value)

    def f(x, y):
        return np.full(np.broadcast(x, y).shape, v)

    return f


def constant_vector_field(vx, vy):
    vx, vy = float(vx), float(vy)

    def f(x, y):
        shape = np.broadcast(x, y).shape
        out = np.empty(shape + (2,))
        out[..., 0] = vx
        out[..., 1] = vy
        return out

    return f


ZERO = constant_field(0.0)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Immutable problem description.

    dirichlet maps boundary tags to g_D callables; tags in neumann_tags
    get homogeneous Neumann conditions.  `boundary_tagger` assigns a tag
    to each boundary facet midpoint when meshes are generated for this
    problem.  `bounds` is the admissible solution interval from the
    boundary-data range.
    """

    name: str
    domain: Domain
    diffusion: callable
    velocity: callable
    reaction: callable
    source: callable
    dirichlet: dict
    neumann_tags: frozenset
    bounds: tuple
    boundary_tagger: callable
    exact: callable = None

    def __post_init__(self):
        overlap = set(self.dirichlet) & set(self.neumann_tags)
        if overlap:
            raise ProblemError(f"tags {sorted(overlap)} are both Dirichlet and Neumann")
        if not self.bounds[0] <= self.bounds[1]:
            raise ProblemError("bounds interval is empty")

    def with_bounds(self, lo, hi):
        return replace(self, bounds=(float(lo), float(hi)))


def evaluate_coefficients(spec, points):
    """Pointwise (K, beta, c, f) at an (n, 2) array of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    return (np.asarray(spec.diffusion(x, y), dtype=float),
            np.asarray(spec.velocity(x, y), dtype=float),
            np.asarray(spec.reaction(x, y), dtype=float),
            np.asarray(spec.source(x, y), dtype=float))


# ---------------------------------------------------------------------------
# benchmark catalogue


def _edge_tagger(segments, tol):
    """Tag boundary midpoints by the nearest declared boundary piece."""
    segs = [(tag, np.asarray(p0, float), np.asarray(p1, float)) for tag, p0, p1 in segments]

    def tagger(x, y):
        pts = np.column_stack([np.atleast_1d(x), np.atleast_1d(y)])
        dists = np.empty((len(pts), len(segs)))
        for j, (_, p0, p1) in enumerate(segs):
            d = p1 - p0
            L2 = d @ d
            t = np.clip(((pts - p0) @ d) / L2, 0.0, 1.0)
            proj = p0 + t[:, None] * d
            dists[:, j] = np.hypot(*(pts - proj).T)
        best = dists.argmin(axis=1)
        if (dists[np.arange(len(pts)), best] > tol).any():
            raise ProblemError("boundary point not on any declared boundary piece")
        return [segs[j][0] for j in best]

    return tagger


def _triple_layer():
    # flow (y, (1-x)^2): inflow through the bottom and left edges, which carry
    # the three-valued Dirichlet profile; outflow (right, top) is no-flux
    domain = Domain.rectangle(0.0, 0.0, 2.0, 1.0)

    def g_bottom(x, y):
        x = np.asarray(x, dtype=float)
        return np.where((x > 0.125) & (x < 0.5), 1.0,
                        np.where((x > 0.5) & (x < 0.75), 2.0, 0.0))

    def beta(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([y, (1.0 - x) ** 2], axis=-1)

    tagger = _edge_tagger([
        ("bottom", (0, 0), (2, 0)),
        ("right", (2, 0), (2, 1)),
        ("top", (0, 1), (2, 1)),
        ("left", (0, 0), (0, 1)),
    ], tol=1e-9)
    return ProblemSpec(
        name="triple_layer", domain=domain,
        diffusion=constant_field(1e-6), velocity=beta,
        reaction=ZERO, source=ZERO,
        dirichlet={"bottom": g_bottom, "left": ZERO},
        neumann_tags=frozenset({"right", "top"}),
        bounds=(0.0, 2.0), boundary_tagger=tagger)


def _l_shaped():
    domain = Domain.l_shape(2.0, 4.0)

    def beta(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([y, -x], axis=-1)

    tagger = _edge_tagger([
        ("bottom", (2, 0), (4, 0)),
        ("right", (4, 0), (4, 4)),
        ("top", (0, 4), (4, 4)),
        ("inlet", (0, 2), (0, 4)),
        ("notch_h", (0, 2), (2, 2)),
        ("notch_v", (2, 0), (2, 2)),
    ], tol=1e-9)
    return ProblemSpec(
        name="l_shaped", domain=domain,
        diffusion=constant_field(1e-6), velocity=beta,
        reaction=ZERO, source=ZERO,
        dirichlet={"inlet": constant_field(1.0), "top": ZERO,
                   "notch_h": ZERO, "notch_v": ZERO},
        neumann_tags=frozenset({"right", "bottom"}),
        bounds=(0.0, 1.0), boundary_tagger=tagger)


def _internal_layer():
    domain = Domain.rectangle(0.0, 0.0, 1.0, 1.0)

    def g_left(x, y):
        y = np.asarray(y, dtype=float)
        return 0.5 + np.arctan(1e4 * (y - 0.7)) / np.pi

    tagger = _edge_tagger([
        ("bottom", (0, 0), (1, 0)),
        ("right", (1, 0), (1, 1)),
        ("top", (0, 1), (1, 1)),
        ("left", (0, 0), (0, 1)),
    ], tol=1e-9)
    return ProblemSpec(
        name="internal_layer", domain=domain,
        diffusion=constant_field(1e-4),
        velocity=constant_vector_field(math.cos(math.pi / 3), -math.sin(math.pi / 3)),
        reaction=ZERO, source=ZERO,
        dirichlet={"bottom": ZERO, "top": constant_field(1.0),
                   "left": g_left, "right": ZERO},
        neumann_tags=frozenset(),
        bounds=(0.0, 1.0), boundary_tagger=tagger)


def _hemker(circle_segments=128):
    domain = Domain.rectangle_with_circular_hole(-3.0, -3.0, 9.0, 3.0,
                                                 segments=circle_segments)

    def tagger(x, y):
        x = np.atleast_1d(np.asarray(x, float))
        y = np.atleast_1d(np.asarray(y, float))
        out = []
        for xi, yi in zip(x, y):
            if np.hypot(xi, yi) < 2.0:
                out.append("circle")
            elif abs(xi + 3.0) < 1e-9:
                out.append("left")
            elif abs(xi - 9.0) < 1e-9:
                out.append("right")
            elif abs(yi - 3.0) < 1e-9:
                out.append("top")
            elif abs(yi + 3.0) < 1e-9:
                out.append("bottom")
            else:
                raise ProblemError(f"boundary point ({xi}, {yi}) not on the Hemker boundary")
        return out

    return ProblemSpec(
        name="hemker", domain=domain,
        diffusion=constant_field(1e-8),
        velocity=constant_vector_field(1.0, 0.0),
        reaction=ZERO, source=ZERO,
        dirichlet={"circle": constant_field(1.0), "left": ZERO},
        neumann_tags=frozenset({"right", "top", "bottom"}),
        bounds=(0.0, 1.0), boundary_tagger=tagger)


def _manufactured():
    domain = Domain.rectangle(0.0, 0.0, 1.0, 1.0)
    pi = np.pi

    def exact(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def source(x, y):
        # -laplace(u) + beta . grad(u) for beta = (1, 1), K = 1, c = 0
        return (2.0 * pi ** 2 * np.sin(pi * x) * np.sin(pi * y)
                + pi * np.cos(pi * x) * np.sin(pi * y)
                + pi * np.sin(pi * x) * np.cos(pi * y))

    tagger = _edge_tagger([
        ("bottom", (0, 0), (1, 0)),
        ("right", (1, 0), (1, 1)),
        ("top", (0, 1), (1, 1)),
        ("left", (0, 0), (0, 1)),
    ], tol=1e-9)
    dirichlet = {tag: exact for tag in ("bottom", "right", "top", "left")}
    return ProblemSpec(
        name="manufactured", domain=domain,
        diffusion=constant_field(1.0), velocity=constant_vector_field(1.0, 1.0),
        reaction=ZERO, source=source,
        dirichlet=dirichlet, neumann_tags=frozenset(),
        bounds=(0.0, 1.0), boundary_tagger=tagger, exact=exact)


BENCHMARKS = ("triple_layer", "l_shaped", "internal_layer", "hemker", "manufactured")


def make_benchmark(name, circle_segments=128):
    if name == "triple_layer":
        return _triple_layer()
    if name == "l_shaped":
        return _l_shaped()
    if name == "internal_layer":
        return _internal_layer()
    if name == "hemker":
        return _hemker(circle_segments)
    if name == "manufactured":
        return _manufactured()
    raise ProblemError(f"unknown benchmark {name!r}; choose from {BENCHMARKS}")


# ---------------------------------------------------------------------------
# expression grammar for custom problems

_ALLOWED_CALLS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "arctan": np.arctan}
_ALLOWED_NAMES = {"pi": np.pi, "x": None, "y": None}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def parse_expression(text):
    """Compile an arithmetic expression of x and y into a vectorized callable.

    Grammar: + - * / ^, sin, cos, exp, arctan, numbers, pi, x, y.
    """
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ProblemError(f"cannot parse expression {text!r}: {exc}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ProblemError(f"disallowed syntax {type(node).__name__!r} in {text!r}")
        if isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_CALLS
                    and not node.keywords and len(node.args) == 1):
                raise ProblemError(f"disallowed function call in {text!r}")
        if isinstance(node, ast.Name) and node.id not in _ALLOWED_CALLS \
                and node.id not in _ALLOWED_NAMES:
            raise ProblemError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ProblemError(f"non-numeric constant in {text!r}")
    code = compile(tree, "<expression>", "eval")
    env = dict(_ALLOWED_CALLS)
    env["pi"] = np.pi

    def f(x, y):
        out = eval(code, {"__builtins__": {}}, {**env, "x": x, "y": y})
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, y).shape).copy()

    return f


def load_problem(path):
    """Load a custom problem from a TOML file.

    Expected layout: [domain] shell/holes, [coefficients] K/beta/c/f as
    expression strings, [bounds] lower/upper, and [[boundary]] entries
    with tag, from, to, plus either g (Dirichlet expression) or
    neumann = true.
    """
    try:
        import tomllib
    except ModuleNotFoundError:         # Python 3.10
        import tomli as tomllib
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    try:
        dom_cfg = doc["domain"]
        shell = np.array(dom_cfg["shell"], dtype=float)
        holes = tuple(np.array(h, dtype=float) for h in dom_cfg.get("holes", []))
        domain = Domain(shell, holes)
        coeff = doc["coefficients"]
        K = parse_expression(coeff["K"])
        bx = parse_expression(coeff["beta"][0])
        by = parse_expression(coeff["beta"][1])

        def beta(x, y):
            return np.stack([bx(x, y), by(x, y)], axis=-1)

        c = parse_expression(coeff.get("c", "0"))
        f = parse_expression(coeff.get("f", "0"))
        bounds = (float(doc["bounds"]["lower"]), float(doc["bounds"]["upper"]))
        segments = []
        dirichlet = {}
        neumann = set()
        for entry in doc["boundary"]:
            tag = str(entry["tag"])
            segments.append((tag, entry["from"], entry["to"]))
            if entry.get("neumann", False):
                neumann.add(tag)
            else:
                dirichlet[tag] = parse_expression(entry["g"])
        tol = float(doc.get("tag_tolerance", 1e-9)) * max(domain.diameter, 1.0)
        tagger = _edge_tagger(segments, tol=tol)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ProblemError(f"bad problem file {path}: {exc}") from None
    return ProblemSpec(
        name=str(doc.get("name", "custom")), domain=domain,
        diffusion=K, velocity=beta, reaction=c, source=f,
        dirichlet=dirichlet, neumann_tags=frozenset(neumann),
        bounds=bounds, boundary_tagger=tagger)
