"""Two-step fine-tuning plan: source-pretrained -> synthetic -> real.

The plan is declarative; podforge never trains anything. Step one starts
from the source-pretrained weights and fine-tunes on the synthetic dataset;
step two starts from step one's checkpoint and fine-tunes on the real one.
Both steps normalise inputs with the synthetic dataset's pixel mean.
"""

from datetime import datetime, timezone

from podforge.annotations import POD_CATEGORY, manifest_pixel_mean, read_manifest
from podforge.augment import DEFAULT_AUGMENTATIONS
from podforge.errors import InvalidArgument

SOURCE_WEIGHTS = "coco-pretrained"


def build_transfer_plan(synthetic_manifest, real_manifest, augmentations=DEFAULT_AUGMENTATIONS,
                        source_weights=SOURCE_WEIGHTS, created_at=None):
    # Both manifests must parse; the real one only needs to exist and be valid.
    read_manifest(real_manifest)
    mean = list(manifest_pixel_mean(synthetic_manifest))
    augs = [a.to_dict() for a in augmentations]
    steps = [
        {
            "name": "in_vitro",
            "init_weights": source_weights,
            "output_tag": "ckpt_in_vitro",
            "dataset": str(synthetic_manifest),
            "augmentations": augs,
            "pixel_mean": mean,
        },
        {
            "name": "on_branch",
            "init_weights": "ckpt_in_vitro",
            "output_tag": "ckpt_on_branch",
            "dataset": str(real_manifest),
            "augmentations": augs,
            "pixel_mean": mean,
        },
    ]
    plan = {
        "format_version": 1,
        "created_at": created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "categories": [dict(POD_CATEGORY)],
        "num_classes": 2,
        "steps": steps,
    }
    validate_plan(plan)
    return plan


def validate_plan(plan):
    steps = plan.get("steps")
    if not isinstance(steps, list) or len(steps) != 2:
        raise InvalidArgument("a transfer plan has exactly two steps")
    first, second = steps
    if second.get("init_weights") != first.get("output_tag"):
        raise InvalidArgument("step two must start from step one's checkpoint")
    for s in steps:
        for key in ("name", "init_weights", "output_tag", "dataset", "augmentations", "pixel_mean"):
            if key not in s:
                raise InvalidArgument(f"step {s.get('name')!r} lacks {key!r}")
        if len(s["pixel_mean"]) != 3:
            raise InvalidArgument("pixel_mean must have three channels")
