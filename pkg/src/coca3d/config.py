#
# coca3d.config.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import copy
import logging
import os
import yaml

from enum import Enum
from pydantic import BaseModel as PydanticBaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from typing import List
from typing import Optional
from typing import Union


__all__ = [
    "BaseModel",
    "ShapeName",
    "ColorName",
    "RelationName",
    "LambdaTarget",
    "GenerationMode",
    "MetricName",
    "ClusterMethod",
    "PointTokenizer",
    "SceneEncoder",
    "TextEncoder",
    "Contrastive",
    "Decoder",
    "BoxHead",
    "Model",
    "Vocabulary",
    "Dataset",
    "Training",
    "Generation",
    "Evaluation",
    "Cluster",
    "Config",
    "default",
    "save",
    "load",
    "new",
    "edit",
    "show",
    "deepmerge",
]


# Get the logger
logger = logging.getLogger(__name__)


class BaseModel(PydanticBaseModel):
    """
    Create a custom base to define desired behaviour

    """

    # Ensure that enums use string values and don't allow extra fields
    model_config = ConfigDict(
        use_enum_values=True, extra="forbid", validate_default=True
    )


class ShapeName(str, Enum):
    """
    The primitive shapes placed in a synthetic scene

    """

    box = "box"
    sphere = "sphere"
    cylinder = "cylinder"


class ColorName(str, Enum):
    """
    The object colours

    """

    red = "red"
    green = "green"
    blue = "blue"
    yellow = "yellow"
    white = "white"
    black = "black"


class RelationName(str, Enum):
    """
    The spatial relations between two objects

    """

    left_of = "left of"
    right_of = "right of"
    behind = "behind"
    in_front_of = "in front of"
    above = "above"
    next_to = "next to"


class LambdaTarget(str, Enum):
    """
    The loss term weighted by lambda

    """

    caption = "caption"
    contrastive = "contrastive"


class GenerationMode(str, Enum):
    """
    The caption decoding strategy

    """

    greedy = "greedy"
    beam = "beam"


class MetricName(str, Enum):
    """
    The caption metrics

    """

    cider = "cider"
    bleu4 = "bleu4"
    rougel = "rougel"
    meteor = "meteor"


class ClusterMethod(str, Enum):
    """
    An enumeration to describe the cluster method

    """

    local = "local"


def _check_heads(model_dim: int, heads: int):
    if model_dim % heads != 0:
        raise ValueError(
            "model_dim (%d) must be divisible by heads (%d)" % (model_dim, heads)
        )


class PointTokenizer(BaseModel):
    """
    The point cloud tokenizer parameters

    """

    num_patches: int = Field(64, description="The number of patches (M)", ge=1)

    group_size: int = Field(16, description="The points per patch (K)", ge=1)

    embed_dim: int = Field(64, description="The patch embedding width (D_p)", ge=1)

    hidden_dim: int = Field(
        64, description="The hidden width of the point-wise network", ge=1
    )

    n_features: int = Field(
        4, description="The per point feature count (F, rgb + height)", ge=0
    )

    start_index: int = Field(
        0, description="The first farthest point sampling pick", ge=0
    )


class SceneEncoder(BaseModel):
    """
    The frozen scene transformer parameters

    """

    layers: int = Field(4, description="The number of transformer blocks", ge=0)

    heads: int = Field(4, description="The number of attention heads", ge=1)

    model_dim: int = Field(128, description="The transformer width (D)", ge=1)

    mlp_ratio: int = Field(4, description="The feed-forward expansion", ge=1)

    task_tokens: int = Field(4, description="The number of task tokens (m_t)", ge=1)

    @model_validator(mode="after")
    def check_heads(self):
        _check_heads(self.model_dim, self.heads)
        return self


class TextEncoder(BaseModel):
    """
    The frozen text transformer parameters

    """

    layers: int = Field(4, description="The number of transformer blocks", ge=0)

    heads: int = Field(4, description="The number of attention heads", ge=1)

    model_dim: int = Field(128, description="The transformer width (D_t)", ge=1)

    mlp_ratio: int = Field(4, description="The feed-forward expansion", ge=1)

    max_len: int = Field(
        64, description="The maximum token sequence length", ge=3
    )

    @model_validator(mode="after")
    def check_heads(self):
        _check_heads(self.model_dim, self.heads)
        return self


class Contrastive(BaseModel):
    """
    The contrastive head parameters

    """

    shared_dim: int = Field(128, description="The shared embedding width (D_s)", ge=1)

    init_temperature: float = Field(
        0.07, description="The initial temperature", gt=0
    )

    min_temperature: float = Field(0.01, description="The temperature floor", gt=0)

    max_temperature: float = Field(100.0, description="The temperature ceiling", gt=0)

    symmetric: bool = Field(
        False, description="Also add the text to scene direction to the loss"
    )


class Decoder(BaseModel):
    """
    The caption decoder parameters

    """

    layers: int = Field(2, description="The number of decoder layers", ge=0)

    heads: int = Field(4, description="The number of attention heads", ge=1)

    model_dim: int = Field(128, description="The decoder width", ge=1)

    mlp_ratio: int = Field(4, description="The feed-forward expansion", ge=1)

    max_decode_len: int = Field(
        32, description="The maximum decoder input length", ge=2
    )

    @model_validator(mode="after")
    def check_heads(self):
        _check_heads(self.model_dim, self.heads)
        return self


class BoxHead(BaseModel):
    """
    The optional box regression head

    """

    enabled: bool = Field(False, description="Train and use the box head")

    hidden_dim: int = Field(64, description="The hidden width", ge=1)

    weight: float = Field(1.0, description="The box loss weight", ge=0)


class Model(BaseModel):
    """
    The full model parameters

    """

    point_tokenizer: PointTokenizer = Field(
        PointTokenizer(), description="The point tokenizer parameters"
    )

    scene_encoder: SceneEncoder = Field(
        SceneEncoder(), description="The scene encoder parameters"
    )

    text_encoder: TextEncoder = Field(
        TextEncoder(), description="The text encoder parameters"
    )

    contrastive: Contrastive = Field(
        Contrastive(), description="The contrastive head parameters"
    )

    decoder: Decoder = Field(Decoder(), description="The decoder parameters")

    box_head: BoxHead = Field(BoxHead(), description="The box head parameters")


class Vocabulary(BaseModel):
    """
    The vocabulary parameters

    """

    max_size: int = Field(
        512, description="The maximum vocabulary size (specials + subwords + bytes)"
    )

    @model_validator(mode="after")
    def check_size(self):
        if self.max_size < 261:
            raise ValueError("max_size must be at least 261 (5 specials + 256 bytes)")
        return self


class Dataset(BaseModel):
    """
    The synthetic dataset parameters

    """

    count: int = Field(64, description="The number of scenes", ge=1)

    points_per_scene: int = Field(1024, description="The points per scene (N)", ge=1)

    min_objects: int = Field(1, description="The minimum objects per scene", ge=1, le=4)

    max_objects: int = Field(4, description="The maximum objects per scene", ge=1, le=4)

    shapes: List[ShapeName] = Field(
        [ShapeName.box, ShapeName.sphere, ShapeName.cylinder],
        description="The shapes to sample from",
        min_length=1,
    )

    colors: List[ColorName] = Field(
        [c for c in ColorName], description="The colours to sample from", min_length=1
    )

    relations: List[RelationName] = Field(
        [r for r in RelationName],
        description="The relations to sample from",
        min_length=1,
    )

    captions_per_object: int = Field(
        3, description="The maximum paraphrase captions per object", ge=1, le=3
    )

    floor: bool = Field(True, description="Sample floor points under the objects")

    train_fraction: float = Field(0.8, description="The train split fraction", ge=0)

    val_fraction: float = Field(0.1, description="The validation split fraction", ge=0)

    test_fraction: float = Field(0.1, description="The test split fraction", ge=0)

    @model_validator(mode="after")
    def check_ranges(self):
        if self.min_objects > self.max_objects:
            raise ValueError("min_objects must be <= max_objects")
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError("Split fractions must sum to 1, got %g" % total)
        return self


class Training(BaseModel):
    """
    The training parameters

    """

    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(
        1.0, alias="lambda", description="The loss balance weight", ge=0
    )

    lambda_target: LambdaTarget = Field(
        LambdaTarget.caption,
        description="The loss weighted by lambda (caption: L_Con + l*L_Cap)",
    )

    learning_rate: float = Field(1e-3, description="The peak learning rate", gt=0)

    batch_size: int = Field(8, description="The batch size", ge=1)

    epochs: int = Field(100, description="The number of epochs", ge=1)

    max_steps: Optional[int] = Field(
        None, description="Stop after this many steps (overrides epochs)", ge=1
    )

    beta1: float = Field(0.9, description="The first moment decay", ge=0, lt=1)

    beta2: float = Field(0.999, description="The second moment decay", ge=0, lt=1)

    eps: float = Field(1e-8, description="The optimizer epsilon", gt=0)

    weight_decay: float = Field(0.01, description="The decoupled weight decay", ge=0)

    min_lr_ratio: float = Field(
        1e-3, description="The final learning rate as a fraction of the peak", ge=0
    )

    checkpoint_every: int = Field(
        500, description="Write a checkpoint every this many steps", ge=1
    )

    log_every: int = Field(10, description="Log progress every this many steps", ge=1)

    @model_validator(mode="after")
    def check_batch_size(self):
        contrastive_active = not (
            self.lambda_target == LambdaTarget.contrastive and self.lambda_ == 0
        )
        if contrastive_active and self.batch_size < 2:
            raise ValueError(
                "batch_size must be >= 2 when the contrastive term is active"
            )
        return self


class Generation(BaseModel):
    """
    The caption generation parameters

    """

    mode: GenerationMode = Field(
        GenerationMode.greedy, description="The decoding strategy"
    )

    beam_width: int = Field(3, description="The beam width", ge=1)

    max_len: int = Field(32, description="The maximum generated length", ge=1)


class Evaluation(BaseModel):
    """
    The evaluation parameters

    """

    iou_thresholds: List[float] = Field(
        [0.25, 0.5], description="The IoU thresholds (k)", min_length=1
    )

    nms_threshold: float = Field(0.5, description="The NMS IoU threshold", ge=0, le=1)

    metrics: List[MetricName] = Field(
        [MetricName.cider, MetricName.bleu4, MetricName.rougel, MetricName.meteor],
        description="The caption metrics",
        min_length=1,
    )


class Cluster(BaseModel):
    """
    A model to set the cluster parameters for multiprocessing

    """

    method: Optional[ClusterMethod] = Field(
        None, description="The cluster method to use"
    )

    max_workers: int = Field(1, description="The maximum number of worker processes")


class Config(BaseModel):
    """
    The coca3d configuration parameters

    """

    model: Model = Field(Model(), description="The model parameters")

    vocabulary: Vocabulary = Field(
        Vocabulary(), description="The vocabulary parameters"
    )

    dataset: Dataset = Field(Dataset(), description="The dataset parameters")

    training: Training = Field(Training(), description="The training parameters")

    generation: Generation = Field(
        Generation(), description="The generation parameters"
    )

    evaluation: Evaluation = Field(
        Evaluation(), description="The evaluation parameters"
    )

    cluster: Cluster = Field(Cluster(), description="The cluster parameters")

    seed: int = Field(0, description="The master random seed", ge=0)


def default() -> Config:
    """
    Return:
        obj: the default configuration

    """
    return Config()


def save(config: Config, filename: str = "config.yaml", **kwargs):
    """
    Save the configuration file

    Args:
        config (str): The configuration object
        filename (str): The configuration filename

    """

    # Get the dictionary
    d = config.model_dump(mode="json", by_alias=True, **kwargs)

    # Write the output file
    with open(filename, "w") as outfile:
        yaml.safe_dump(d, outfile)


def load(config: Union[str, dict, Config] = None) -> Config:
    """
    Load the configuration from the various inputs

    Args:
        config (str): The config filename or config dictionary

    Returns:
        The configuration object

    """

    # A config object is copied so overrides don't leak back
    if isinstance(config, Config):
        return config.model_copy(deep=True)

    # If the yaml configuration is set then merge the configuration
    if config:
        if isinstance(config, str):
            if not os.path.exists(config):
                raise FileNotFoundError("Config file not found: %s" % config)
            with open(config) as infile:
                config_file = yaml.safe_load(infile) or {}
        else:
            config_file = config
    else:
        config_file = {}

    # Get the configuration
    return Config(**config_file)


def new(filename: str = "config.yaml", full: bool = False) -> Config:
    """
    Generate a new config file

    Args:
        filename: The config filename
        full: Full or basic configuration

    """

    # Get the configuration object
    config = Config()

    # Set items to include in output
    if full:
        include = None
    else:
        include = {
            "model": {
                "point_tokenizer": {"num_patches", "group_size"},
                "scene_encoder": {"layers", "model_dim", "task_tokens"},
                "text_encoder": {"layers", "model_dim"},
                "decoder": {"layers", "model_dim"},
            },
            "dataset": {"count", "points_per_scene", "max_objects"},
            "training": {"lambda_", "learning_rate", "batch_size", "epochs"},
            "generation": {"mode", "beam_width"},
            "seed": True,
        }

    # Save the config file
    save(config, filename, include=include)

    # Return the config
    return config


def edit(
    in_filename: str = "config.yaml", out_filename: str = None, config_obj: str = ""
):
    """
    Edit the configuration

    """

    def get_config_obj(config_obj):
        if isinstance(config_obj, str):
            return yaml.safe_load(config_obj) or {}
        return config_obj

    # Check the output filename
    if out_filename is None:
        out_filename = in_filename

    # Parse the arguments
    config = load(in_filename)

    # Merge the dictionaries
    d1 = config.model_dump(mode="json", by_alias=True, exclude_unset=True)
    d2 = get_config_obj(config_obj)
    d = deepmerge(d1, d2)

    # Load the new configuration
    config = load(d)

    # Save the config
    save(config, out_filename, exclude_unset=True)

    # Return config
    return config


def show(config: Config, full: bool = False, schema: str = None) -> str:
    """
    Render the configuration as YAML

    Args:
        config: The configuration object
        full: Show the full configuration (True or False)
        schema: Show the schema

    """
    if schema:
        if schema in ["."]:
            d = config.model_json_schema()
        elif schema.startswith("/definitions/") or schema.startswith("/$defs/"):
            schema = os.path.basename(schema)
            definitions = config.model_json_schema().get("$defs", {})
            try:
                d = definitions[schema]
            except KeyError:
                raise RuntimeError(
                    "Unable to find definition '%s' in\n%s"
                    % (
                        schema,
                        "\n".join(" - %s" % v for v in sorted(definitions.keys())),
                    )
                )
        else:
            raise RuntimeError("Unknown scheme value '%s' (see help)" % schema)
    else:
        d = config.model_dump(mode="json", by_alias=True, exclude_unset=not full)
    return yaml.safe_dump(d, indent=4)


def deepmerge(a: dict, b: dict) -> dict:
    """
    Perform a deep merge of two dictionaries

    Args:
        a: The first dictionary
        b: The second dictionary
    Returns:
        The merged dictionary

    """

    def deepmerge_internal(self, other):
        for key, value in other.items():
            if key in self:
                if isinstance(value, dict):
                    if self[key] is None:
                        self[key] = {}
                    deepmerge_internal(self[key], value)
                else:
                    self[key] = copy.deepcopy(value)
            else:
                self[key] = copy.deepcopy(value)
        return self

    return deepmerge_internal(copy.deepcopy(a), b)
