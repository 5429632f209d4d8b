"""Region-aware negative sampling for bipartite graph recommenders."""

from .graph import (InteractionGraph, DatasetSplit, LoadResult, load_interactions,
                    export_interactions, split_dataset, restrict_clicks,
                    GraphFormatError, EmptyGraphError)
from .regions import (ShellArray, RegionPartition, bfs_layer, user_shells,
                      assign_regions, build_partition)
from .similarity import (WeightMatrix, rate, ratio, weight, build_weight_matrix)
from .subset import (CandidateTable, SelectionResult, bic_score, fisher_exact,
                     stagewise_select, select_core_negatives)
from .sampler import (SamplerConfig, SampleSets, NegativeSampler, build_sets,
                      sample_negatives, exposure_argmax, baseline_uniform,
                      baseline_dns, build_negative_sampler)
from .model import (TrainConfig, EmbeddingModel, propagate, fuse, hinge_loss,
                    hinge_loss_and_gradient, train, recommend_topk)
from .metrics import (MetricValues, MetricsReport, recall_at_k, ndcg_at_k,
                      hr_at_k, evaluate)
from .synthetic import SyntheticSpec, generate_synthetic
from .pipeline import (ExperimentConfig, load_config, run_pipeline, prepare,
                       train_eval)
from .experiments import compare_samplers, sweep_n, region_ablation

__version__ = "0.1.0"
