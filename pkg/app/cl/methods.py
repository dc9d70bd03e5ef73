"""CL method registry and the per-run state each method carries between tasks"""
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from cl.fisher import FisherStore, empirical_fisher, ewc_penalty, online_fisher_update
from cl.kancl import (
    ImportanceStore,
    accumulate_and_snapshot,
    activation_mass,
    anchor_penalty,
    anneal_scale,
    combine_importance,
    edge_importance,
    knot_fisher,
    mask_gradient,
)
from cl.replay import ReplayBuffer
from cl.si import SiState, si_accumulate, si_consolidate, si_penalty
from core.errors import ConfigError
from core.logging import get_logger
from models.experiment import MethodConfig
from nn.model import Model
from numerics.rng import Rng

logger = get_logger("cl.methods")

BACKBONE_PATTERNS = ("backbone.*", "feat_norm.*")


@dataclass(frozen=True)
class MethodSpec:
    """Which mechanisms a method switches on"""
    name: str
    knot_regularizer: bool = False
    backbone_ewc: bool = False
    global_ewc: bool = False
    synaptic_intelligence: bool = False
    replay: bool = False
    description: str = ""


METHOD_REGISTRY: Dict[str, MethodSpec] = {
    spec.name: spec
    for spec in (
        MethodSpec("finetune", description="plain cross-entropy"),
        MethodSpec("ewc", global_ewc=True, description="online EWC over every parameter"),
        MethodSpec("si", synaptic_intelligence=True, description="synaptic intelligence over every parameter"),
        MethodSpec("kan_cl", knot_regularizer=True, description="per-knot mask and anchor on the KAN head"),
        MethodSpec(
            "kan_cl_bbewc", knot_regularizer=True, backbone_ewc=True,
            description="per-knot head regularizer plus EWC on backbone.* and feat_norm.*",
        ),
        MethodSpec("mlp_bbewc", backbone_ewc=True, description="MLP head with backbone EWC"),
        MethodSpec("replay", replay=True, description="reservoir replay"),
        MethodSpec(
            "kan_cl_replay", knot_regularizer=True, replay=True,
            description="reservoir replay with the annealed per-knot regularizer",
        ),
    )
}


def get_method_spec(name: str) -> MethodSpec:
    try:
        return METHOD_REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown method '{name}'", {"known": sorted(METHOD_REGISTRY)}) from None


@dataclass
class Penalties:
    anchor: float = 0.0
    bb: float = 0.0


class ContinualMethod:
    """
    Owns the stores of one method for one seed

    The training loop calls begin_task, regularize (every step), after_step,
    replay_batch and post_task; everything else is internal.
    """

    def __init__(
        self,
        name: str,
        params: MethodConfig,
        model: Model,
        rng: Rng,
        fisher_sample_cap: Optional[int] = None,
    ):
        self.spec = get_method_spec(name)
        self.params = params
        self.rng = rng
        self.fisher_sample_cap = fisher_sample_cap
        self.importance: Optional[ImportanceStore] = None
        self.fisher = FisherStore()
        self.si: Optional[SiState] = None
        self.buffer: Optional[ReplayBuffer] = None
        if self.spec.knot_regularizer:
            if model.head_type != "kan":
                raise ConfigError(f"method {name} needs a KAN head, got {model.kind}")
            self.importance = ImportanceStore.for_model(model)
        if self.spec.backbone_ewc and not model.is_hybrid:
            raise ConfigError(f"method {name} needs a CNN backbone, got {model.kind}")
        if self.spec.synaptic_intelligence:
            self.si = SiState(xi=params.xi)
        if self.spec.replay:
            self.buffer = ReplayBuffer(params.buffer_capacity, rng.child("reservoir"))

    @property
    def name(self) -> str:
        return self.spec.name

    def head_scale(self, progress: float) -> float:
        """Multiplier on lambda and beta; annealed only when replay is active"""
        if self.spec.replay:
            return anneal_scale(self.params.rho, self.params.delta, progress)
        return 1.0

    def begin_task(self, model: Model, task_index: int) -> None:
        if self.si is not None:
            self.si.start(model.registry)

    def regularize(self, model: Model, grads: Dict[str, np.ndarray], progress: float) -> Penalties:
        """
        Add penalty gradients to `grads` in place and mask head spline gradients

        Args:
            model: live model
            grads: CE gradients per path
            progress: fraction of this task's optimizer steps already taken

        Returns:
            Penalties: anchor and bb loss values
        """
        out = Penalties()
        if self.importance is not None and self.importance.tasks_seen:
            scale = self.head_scale(progress)
            lam = self.params.lambda_anchor * scale
            beta = self.params.beta * scale
            layers = model.kan_layers
            with_base = self.params.regularize_base_weights
            if lam > 0:
                value, c_grads, w_grads = anchor_penalty(
                    [layer.spline_coeffs.value for layer in layers],
                    self.importance,
                    lam,
                    [layer.base_weight.value for layer in layers] if with_base else None,
                )
                out.anchor = value
                for idx, g in enumerate(c_grads):
                    grads[f"head.{idx}.spline_coeffs"] = grads[f"head.{idx}.spline_coeffs"] + g
                for idx, g in enumerate(w_grads or []):
                    grads[f"head.{idx}.base_weight"] = grads[f"head.{idx}.base_weight"] + g
            if beta > 0:
                for idx, S in enumerate(self.importance.S):
                    key = f"head.{idx}.spline_coeffs"
                    grads[key] = mask_gradient(grads[key], S, beta)
                    if with_base:
                        wkey = f"head.{idx}.base_weight"
                        grads[wkey] = mask_gradient(grads[wkey], edge_importance(S), beta)
        if self.fisher and (self.spec.backbone_ewc or self.spec.global_ewc):
            lam_b = self.params.lambda_b if self.spec.backbone_ewc else self.params.ewc_lambda
            if lam_b > 0:
                out.bb, bb_grads = ewc_penalty(model.registry, self.fisher, lam_b)
                for path, g in bb_grads.items():
                    grads[path] = grads[path] + g
        if self.si is not None and self.si.big_omega and self.params.si_lambda > 0:
            out.bb, si_grads = si_penalty(model.registry, self.si, self.params.si_lambda)
            for path, g in si_grads.items():
                grads[path] = grads[path] + g
        return out

    def after_step(self, ce_grads: Mapping[str, np.ndarray], deltas: Mapping[str, np.ndarray]) -> None:
        if self.si is not None:
            si_accumulate(self.si, ce_grads, deltas)

    def replay_batch(self, n: int, rng: Rng) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
        if self.buffer is None or len(self.buffer) == 0 or n == 0:
            return None
        return self.buffer.sample(min(n, len(self.buffer)), rng)

    def post_task(self, model: Model, task, class_mask: Optional[np.ndarray]) -> List[str]:
        """
        Update the method's stores after training on `task`

        Returns:
            List[str]: names of the hooks that ran
        """
        ran: List[str] = []
        data = task.train
        rng = self.rng.child("post_task", task.index)
        if self.importance is not None:
            F = knot_fisher(
                model, data, self.fisher_sample_cap, class_mask,
                self.params.fisher_model_labels, rng.child("knot_fisher"),
            )
            A = activation_mass(model, data, self.fisher_sample_cap)
            scores = [combine_importance(f, a, self.params.alpha_f, self.params.alpha_a) for f, a in zip(F, A)]
            accumulate_and_snapshot(self.importance, scores, model)
            ran += ["knot_fisher", "activation_mass", "combine_importance", "accumulate_and_snapshot"]
        if self.spec.backbone_ewc or self.spec.global_ewc:
            patterns = BACKBONE_PATTERNS if self.spec.backbone_ewc else "*"
            new = empirical_fisher(
                model, data, patterns, self.fisher_sample_cap, class_mask,
                self.params.fisher_model_labels, rng.child("fisher"),
            )
            self.fisher = online_fisher_update(self.fisher, new, self.params.gamma)
            ran += ["empirical_fisher", "online_fisher_update"]
        if self.si is not None:
            si_consolidate(self.si, model.registry)
            ran.append("si_consolidate")
        if self.buffer is not None:
            self.buffer.rng = self.rng.child("reservoir", task.index)
            self.buffer.insert_many(data.images, data.labels, task.index)
            ran.append("replay_insert")
        if ran:
            logger.info(f"{self.name}: post-task hooks for task {task.index}: {', '.join(ran)}")
        return ran

    def state_arrays(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        if self.importance is not None:
            out.update(self.importance.to_arrays())
        if self.fisher:
            out.update(self.fisher.to_arrays())
        if self.si is not None:
            out.update(self.si.to_arrays())
        if self.buffer is not None:
            out.update(self.buffer.to_arrays())
        return out

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        if self.importance is not None:
            self.importance.load_arrays(arrays)
        self.fisher = FisherStore.from_arrays(arrays)
        if self.si is not None:
            self.si.load_arrays(arrays)
        if self.buffer is not None:
            self.buffer.load_arrays(arrays)
