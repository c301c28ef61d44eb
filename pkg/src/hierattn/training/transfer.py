from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from ..checkpoint import Checkpoint
from ..nn import Module

# layers after the branch attention stay randomly initialised when transferring
HEAD_PREFIXES = ("head.", "classifier.")


@dataclass
class FreezePolicy:
    frozen: frozenset = field(default_factory=frozenset)

    def indices(self, model: Module) -> list[int]:
        return [i for i, (n, _) in enumerate(model.named_parameters()) if n in self.frozen]

    def trainable(self, model: Module) -> list[str]:
        return [n for n, _ in model.named_parameters() if n not in self.frozen]


def backbone_state(model: Module) -> dict:
    """State dict without the head and classifier, i.e. what gets transferred."""
    return {k: v for k, v in model.state_dict().items() if not k.startswith(HEAD_PREFIXES)}


def load_pretrained_partial(model: Module, checkpoint: Union[Checkpoint, dict]) -> tuple[Module, FreezePolicy]:
    """Copy every parameter whose name exists in ``checkpoint``.

    Shape conflicts on matching names raise. The returned policy freezes
    exactly the transferred parameters.
    """
    state = checkpoint.state if isinstance(checkpoint, Checkpoint) else checkpoint
    names = {n for n, _ in model.named_parameters()}
    loaded = model.load_state_dict(state, strict=False)
    return model, FreezePolicy(frozenset(n for n in loaded if n in names))
