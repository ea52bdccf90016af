"""margintune: inter-class distance analysis and episodic few-shot prompt
adaptation over frozen multimodal embedding banks."""

from .analyzer import (AnalysisReport, analyze_bank, class_prototypes,
                       distance_matrix, distribution_diff,
                       mean_interclass_distance, pearson)
from .bank import (BankError, ClassRecord, EmbeddingBank, ItemRecord,
                   generate_synthetic_bank, load_bank, save_bank)
from .episodes import (Episode, EpisodeError, EpisodeRecord, RunResult,
                       aggregate_results, episode_seed, sample_episode,
                       splitmix64, write_results)
from .model import (PromptState, class_logits, embed_with_prompts,
                    init_prompt_state, load_prompt_state, save_prompt_state,
                    transform_text_batch, transform_vision_batch)
from .objective import (LossBreakdown, cross_entropy, margin_regularizer,
                        mean_pairwise_sq_distance, total_loss_and_grads)
from .selaug import select_augmentations
from .trainer import (TrainConfig, TrainerError, TrainLog, evaluate_episode,
                      load_config, parse_config, run_benchmark,
                      sgd_momentum_step, train_episode)

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport", "BankError", "ClassRecord", "EmbeddingBank", "Episode",
    "EpisodeError", "EpisodeRecord", "ItemRecord", "LossBreakdown",
    "PromptState", "RunResult", "TrainConfig", "TrainLog", "TrainerError",
    "aggregate_results", "analyze_bank", "class_logits", "class_prototypes",
    "cross_entropy", "distance_matrix", "distribution_diff",
    "embed_with_prompts", "episode_seed", "evaluate_episode",
    "generate_synthetic_bank", "init_prompt_state", "load_bank",
    "load_config", "load_prompt_state", "margin_regularizer",
    "mean_interclass_distance", "mean_pairwise_sq_distance", "parse_config",
    "pearson", "run_benchmark", "sample_episode", "save_bank",
    "save_prompt_state", "select_augmentations", "sgd_momentum_step",
    "splitmix64", "total_loss_and_grads", "train_episode",
    "transform_text_batch", "transform_vision_batch", "write_results",
]
