"""Audio-to-visual embedding alignment toolkit.

Trains a lightweight projection head with a combined contrastive and
distribution-matching objective, substitutes audio tokens into visual
token grids, and evaluates the retrieval side of the retrieval/generation
trade-off on stored or synthetic embedding datasets.
"""

from .analysis import (InterpolationConfig, interpolate, interpolation_sweep,
                       pearson, tradeoff_report)
from .errors import (ConfigError, FormatError, ShapeError, ValidationError,
                     XmodalError)
from .fusion import FusionStrategy, fuse, mean_time
from .projection import (ProjectionParams, init_projection, load_params,
                         pad_or_truncate, param_count, project, project_batch,
                         save_params)
from .retrieval import (RetrievalProtocol, RetrievalReport, evaluate_retrieval,
                        rank_of_match, similarity_matrix)
from .store import (AlignmentScores, DatasetDims, EmbeddingDataset, Segment,
                    SegmentMeta, Split, SynthConfig, datasets_equal,
                    filter_by_alignment, generate_synthetic, load_dataset,
                    save_dataset)
from .substitution import SubstitutionResult, cosine_sim, substitute
from .training import (AdamState, TrainingConfig, TrainingLog, adam_step,
                       dist_match, info_nce, loss_gradients, total_loss,
                       train_projection)

__version__ = "0.1.0"
