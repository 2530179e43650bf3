"""One-step provisioning of the seeded reference scenario.

Builds a reference pipeline plus four variants, one per variation pattern
(dataset swap, model swap, augmentation insert, XAI-method swap), executes
them all, and leaves the provenance graphs ready for diff walkthroughs.
Everything is derived from one seed, so repeated runs reproduce identical
results hashes.
"""

from __future__ import annotations

from .center import CoordinationCenter
from .services.datasets import generate_synthetic_dataset
from .services.models import build_prototype_model

DEMO_SEED = 7
LABELS = 2
PER_LABEL = 3
SIZE = 8

# pipeline ids: "demo" is the reference configuration; each variant swaps
# exactly one slot relative to it (demo-xai swaps relative to demo-augment,
# mirroring the case-three/case-four comparison)
REFERENCE = "demo"
VARIANTS = ("demo-dataset", "demo-model", "demo-augment", "demo-xai")
DIFF_PAIRS = {
    "dataset_swap": (REFERENCE, "demo-dataset"),
    "model_swap": (REFERENCE, "demo-model"),
    "augmentation_insert": (REFERENCE, "demo-augment"),
    "xai_method_swap": ("demo-augment", "demo-xai"),
}


def provision_demo(center: CoordinationCenter, seed: int = DEMO_SEED, *,
                   execute: bool = True,
                   case4_xai: tuple[str, str] | None = None) -> dict:
    """Provision datasets, services, sheets, and pipelines; optionally run.

    ``case4_xai`` overrides the (service_id, endpoint) used by the
    XAI-method-swap variant, which is how an external explanation service
    slots into the scenario.
    """
    center.add_dataset_group(generate_synthetic_dataset(
        LABELS, PER_LABEL, SIZE, SIZE, seed, group_id="demo-data-a",
        name="demo dataset A"))
    center.add_dataset_group(generate_synthetic_dataset(
        LABELS, PER_LABEL, SIZE, SIZE, seed + 1, group_id="demo-data-b",
        name="demo dataset B"))

    center.hub.add_model("proto-a", build_prototype_model(LABELS, SIZE, SIZE,
                                                          temperature=0.02))
    center.hub.add_model("proto-b", build_prototype_model(LABELS, SIZE, SIZE,
                                                          temperature=0.05))
    center.hub.add_xai_method("occlusion")
    center.hub.add_xai_method("occlusion-alt")

    center.register_service("svc-store", "database", "builtin:datasets",
                            name="reference dataset store")
    center.register_service("svc-model-a", "ai_model",
                            "builtin:models/proto-a",
                            name="prototype classifier A")
    center.register_service("svc-model-b", "ai_model",
                            "builtin:models/proto-b",
                            name="prototype classifier B")
    center.register_service("svc-xai-occlusion", "xai_method",
                            "builtin:xai/occlusion",
                            name="built-in occlusion saliency")
    if case4_xai is None:
        case4_id = "svc-xai-occlusion-alt"
        center.register_service(case4_id, "xai_method",
                                "builtin:xai/occlusion-alt",
                                name="alternate occlusion saliency")
    else:
        case4_id, endpoint = case4_xai
        center.register_service(case4_id, "xai_method", endpoint,
                                name="external occlusion saliency")
    center.register_service("svc-eval", "evaluation", "builtin:evaluation",
                            name="reference evaluation service")

    center.augment_dataset("svc-store", "demo-data-a", "demo-data-a-cutmix",
                           seed=seed + 2, lam=0.75)

    xai_params = {"q": 0.5, "fill": 0.0, "window": 2, "stride": 1, "seed": seed}
    eval_params = {"bins": 50, "range": [0.0, 1.0], "threshold": 0.5,
                   "distance": "abs_delta"}
    cases = {
        REFERENCE: {"dataset": "demo-data-a", "model": "svc-model-a",
                    "xai": "svc-xai-occlusion"},
        "demo-dataset": {"dataset": "demo-data-b", "model": "svc-model-a",
                         "xai": "svc-xai-occlusion"},
        "demo-model": {"dataset": "demo-data-a", "model": "svc-model-b",
                       "xai": "svc-xai-occlusion"},
        "demo-augment": {"dataset": "demo-data-a-cutmix",
                         "model": "svc-model-a", "xai": "svc-xai-occlusion"},
        "demo-xai": {"dataset": "demo-data-a-cutmix", "model": "svc-model-a",
                     "xai": case4_id},
    }
    summary = {"seed": seed, "pipelines": {}}
    for pipeline_id, binding in cases.items():
        center.create_task_sheet(
            f"{pipeline_id}-sheet-xai", "xai", f"{pipeline_id} explanation task",
            {"database": "svc-store", "ai_model": binding["model"],
             "xai_method": binding["xai"]},
            dataset_ref=binding["dataset"], parameters=xai_params)
        center.create_task_sheet(
            f"{pipeline_id}-sheet-eval", "evaluation",
            f"{pipeline_id} evaluation task",
            {"database": "svc-store", "evaluation": "svc-eval"},
            parameters=eval_params)
        center.create_pipeline(pipeline_id, f"pipeline {pipeline_id}",
                               [f"{pipeline_id}-sheet-xai", f"{pipeline_id}-sheet-eval"])
        summary["pipelines"][pipeline_id] = {"sheets": [f"{pipeline_id}-sheet-xai",
                                                        f"{pipeline_id}-sheet-eval"]}

    if execute:
        summary = run_demo_pipelines(center, seed, base=summary)
    return summary


def run_demo_pipelines(center: CoordinationCenter, seed: int = DEMO_SEED, *,
                       base: dict | None = None) -> dict:
    """Execute every demo pipeline on an already-provisioned center."""
    summary = base or {"seed": seed, "pipelines": {
        pid: {"sheets": [f"{pid}-sheet-xai", f"{pid}-sheet-eval"]}
        for pid in (REFERENCE, *VARIANTS)
    }}
    for pipeline_id in (REFERENCE, *VARIANTS):
        execution = center.execute_pipeline(pipeline_id)
        entry = summary["pipelines"][pipeline_id]
        entry["execution"] = execution.ticket
        entry["status"] = execution.status
        entry["sheet_executions"] = list(execution.sheet_executions)
        entry["results"] = [
            center.get_status(t).results_hash
            for t in execution.sheet_executions
        ]
    return summary
