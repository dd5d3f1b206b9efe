"""Area hierarchy: containment, request fallback, and provider selection.

Named requests walk from the requester's innermost area upward until some
area grants or the root refuses. General requests start at the nearest
resolution-root ancestor and pick among advertised providers, weighted by
free capacity, so high-level areas can balance load across venues.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import LoadError


@dataclass
class AreaNode:
    instance_id: str
    bounds: tuple  # (x, y, w, h); root covers the whole map
    parent: "AreaNode | None" = None
    children: list = field(default_factory=list)
    depth: int = 0

    def contains(self, pos) -> bool:
        x, y, w, h = self.bounds
        return x <= pos[0] < x + w and y <= pos[1] < y + h


ROOT_AREA_ID = "world-root"


class AreaTree:
    def __init__(self, width: int, height: int):
        self.root = AreaNode(ROOT_AREA_ID, (0, 0, width, height))
        self.nodes: dict[str, AreaNode] = {ROOT_AREA_ID: self.root}

    def add(self, instance_id: str, bounds: tuple, line: int = 0) -> list:
        """Insert by containment. Returns LoadErrors on nesting violations."""
        errors = []
        parent = self.root
        descended = True
        while descended:
            descended = False
            for child in parent.children:
                if _inside(bounds, child.bounds):
                    parent = child
                    descended = True
                    break
        for sibling in parent.children:
            if _overlaps(bounds, sibling.bounds) and not _inside(bounds, sibling.bounds):
                errors.append(LoadError(
                    "AreaOverlap",
                    f"area {instance_id} overlaps sibling {sibling.instance_id}", line))
        if not _inside(bounds, parent.bounds):
            errors.append(LoadError(
                "AreaBounds", f"area {instance_id} exceeds parent "
                f"{parent.instance_id}", line))
        node = AreaNode(instance_id, bounds, parent, depth=parent.depth + 1)
        parent.children.append(node)
        self.nodes[instance_id] = node
        return errors

    def innermost(self, pos) -> AreaNode:
        node = self.root
        while True:
            for child in node.children:
                if child.contains(pos):
                    node = child
                    break
            else:
                return node

    def chain_of(self, pos) -> list:
        """Innermost-first list of containing areas, ending at the root."""
        node = self.innermost(pos)
        chain = []
        while node is not None:
            chain.append(node)
            node = node.parent
        return chain


def _inside(inner, outer) -> bool:
    ix, iy, iw, ih = inner
    ox, oy, ow, oh = outer
    return ix >= ox and iy >= oy and ix + iw <= ox + ow and iy + ih <= oy + oh


def _overlaps(a, b) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def resolve_named(world, start_node: AreaNode, name: str):
    """Walk upward from the start area until a grant is possible. Private
    behaviors never take part. Returns (instance, behavior, spec) or the
    refusal reason of the last area asked."""
    node = start_node
    reason = "no-such-behavior"
    while node is not None:
        instance = world.instances.get(node.instance_id)
        if instance is not None:
            spec = instance.template.behaviors.get(name)
            if spec is not None and not spec.private:
                outcome = instance.check_grant(name)
                if isinstance(outcome, tuple):
                    if node is not start_node:
                        world.emit(world.current_owner or "world", "request-escalated",
                                   behavior=name, to=instance.id)
                    return instance, outcome[0], outcome[1]
                reason = outcome
        node = node.parent
    return reason


def resolve_general(world, start_node: AreaNode, general_name: str, rng):
    """Resolve a general behavior: climb to the nearest resolution root (leaf
    areas never take part), then pick among that area's providers by free
    capacity, walking further upward when a level has none.

    Returns ("direct", area_instance, behavior, spec) when the area serves the
    name itself, or ("composite", area_instance, synthetic_name, spec,
    provider_bindings) for a move-there-and-request grant."""
    node = start_node
    while node is not None and not _is_resolution_root(world, node):
        node = node.parent
    if node is None:
        node = world.area_tree.root
    while node is not None:
        picked = _pick_provider(world, node, general_name, rng)
        if picked is not None:
            return picked
        node = node.parent
    return "no-behavior-available"


def _is_resolution_root(world, node: AreaNode) -> bool:
    if node.parent is None:
        return True
    instance = world.instances.get(node.instance_id)
    return instance is not None and instance.template.resolution_root


def _pick_provider(world, node: AreaNode, general_name: str, rng):
    """Providers are the area's links labeled with the general name; each
    target advertises which of its behaviors serves it via `serves`."""
    instance = world.instances.get(node.instance_id)
    if instance is None:
        return None
    candidates = []
    for target_id in instance.env.get(general_name, ()):
        target = world.instances.get(target_id)
        if target is None:
            continue
        for behavior, spec in target.template.behaviors.items():
            if spec.serves != general_name:
                continue
            outcome = target.check_grant(behavior)
            if isinstance(outcome, tuple):
                weight = target.gating[behavior].free_capacity()
                if weight > 0:
                    candidates.append((target, behavior, spec, weight))
    direct = instance.template.behaviors.get(general_name)
    if direct is not None and not _is_synthetic(direct) and \
            isinstance(instance.check_grant(general_name), tuple):
        return "direct", instance, general_name, direct
    if not candidates:
        return None
    total = sum(w for _, _, _, w in candidates)
    roll = rng.randrange(total)
    acc = 0
    for target, behavior, spec, weight in candidates:
        acc += weight
        if roll < acc:
            world.emit(world.current_owner or "world", "provider-selected",
                       behavior=behavior, general=general_name, provider=target.id,
                       weights=";".join(f"{t.id}:{w}" for t, _, _, w in candidates))
            synthetic = instance.template.behaviors.get(general_name)
            if synthetic is None:
                return "direct", target, behavior, spec
            return ("composite", instance, general_name, synthetic,
                    {"general-target": target.id, "general-behavior": behavior})
    return None


def _is_synthetic(spec) -> bool:
    return spec.tree == "__go-use-provider"


def lint_name_shadowing(world) -> list:
    """Warn when a child area redefines a parent-area behavior name without a
    dual-level mark."""
    warnings = []
    for node in world.area_tree.nodes.values():
        instance = world.instances.get(node.instance_id)
        if instance is None:
            continue
        parent = node.parent
        while parent is not None:
            up = world.instances.get(parent.instance_id)
            if up is not None:
                for name, spec in instance.template.behaviors.items():
                    if name in up.template.behaviors and not spec.dual_level:
                        warnings.append(
                            f"NameShadowing: behavior '{name}' of {instance.id} "
                            f"shadows {up.id}")
            parent = parent.parent
    return warnings
