"""Action registry: which body forms feed which action handler.

Fall detection wants whole bodies, sleep works from upper or whole
bodies, and on-duty monitoring counts any person evidence at all. The
registry is data-driven so deployments can add actions (running, etc.)
without code changes; default_registry() encodes the shipped table.
"""

from __future__ import annotations

from dataclasses import dataclass

from .detection import BodyForm, Detection

HANDLER_CLASSIFIER = "classifier"
HANDLER_COUNTER = "counter"


@dataclass(frozen=True)
class RoutingRule:
    """One action: its eligible body forms and the handler kind.

    handler is "classifier" (classifier_name names the binding) or
    "counter" (person counting, no classifier).
    """

    action: str
    eligible_forms: frozenset[BodyForm]
    handler: str
    classifier_name: str | None = None

    def __post_init__(self):
        if not self.action or self.action != self.action.lower():
            raise ValueError(f"action must be a nonempty lowercase name, got {self.action!r}")
        if not self.eligible_forms:
            raise ValueError(f"action {self.action!r} needs at least one eligible form")
        if self.handler not in (HANDLER_CLASSIFIER, HANDLER_COUNTER):
            raise ValueError(f"unknown handler kind {self.handler!r}")
        if self.handler == HANDLER_CLASSIFIER and not self.classifier_name:
            raise ValueError(f"action {self.action!r}: classifier handler needs a name")
        if self.handler == HANDLER_COUNTER and self.classifier_name:
            raise ValueError(f"action {self.action!r}: counter handler takes no classifier")


class Registry:
    """Ordered, immutable collection of routing rules with unique actions."""

    def __init__(self, rules):
        rules = tuple(rules)
        seen = set()
        for rule in rules:
            if rule.action in seen:
                raise ValueError(f"duplicate action {rule.action!r} in registry")
            seen.add(rule.action)
        self._rules = rules
        self._by_action = {rule.action: rule for rule in rules}

    @property
    def rules(self) -> tuple[RoutingRule, ...]:
        return self._rules

    def lookup(self, action: str) -> RoutingRule | None:
        return self._by_action.get(action)

    def __contains__(self, action: str) -> bool:
        return action in self._by_action

    def __iter__(self):
        return iter(self._rules)

    def __len__(self):
        return len(self._rules)


def default_registry() -> Registry:
    """The shipped action table.

    fall/jump/stand need the whole body, sleep accepts upper or whole,
    sit reads the upper body, and on-duty counts every form.
    """
    W, U, P = BodyForm.WHOLE, BodyForm.UPPER, BodyForm.PART
    return Registry(
        [
            RoutingRule("fall", frozenset({W}), HANDLER_CLASSIFIER, "fall"),
            RoutingRule("sleep", frozenset({U, W}), HANDLER_CLASSIFIER, "sleep"),
            RoutingRule("on_duty", frozenset({P, U, W}), HANDLER_COUNTER),
            RoutingRule("jump", frozenset({W}), HANDLER_CLASSIFIER, "jump"),
            RoutingRule("stand", frozenset({W}), HANDLER_CLASSIFIER, "stand"),
            RoutingRule("sit", frozenset({U}), HANDLER_CLASSIFIER, "sit"),
        ]
    )


def route(detections, registry: Registry) -> dict[str, list[Detection]]:
    """Dispatch detections to every action whose forms accept them.

    Every registry action gets an entry (possibly empty); input order is
    preserved and one detection may appear under several actions.
    """
    routed: dict[str, list[Detection]] = {rule.action: [] for rule in registry}
    for det in detections:
        for rule in registry:
            if det.form in rule.eligible_forms:
                routed[rule.action].append(det)
    return routed
