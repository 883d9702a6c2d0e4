"""Win-propensity scoring for sales-pipeline leads.

Weekly lead snapshots are joined with quarter-end outcomes, encoded with
one-hot, standardized and week-interaction features, fitted with an
L2-regularized logistic regression, and evaluated with ROC-AUC and
cumulative-gain scores by segment and week.
"""
from .assembly import CompositionPolicy, LabeledRow, TrainingSet, compose_training_set, label_snapshots, resolve_sources
from .datastore import DEFAULT_SCHEMA, LeadSnapshot, OutcomeRecord, Quarter, SchemaSpec, week_of
from .features import EncodedRow, EncoderConfig, FeatureVocabulary, build_design_matrix, encode, fit_vocabulary
from .metrics import (
    GainCurve,
    ScoredOutcome,
    gain_curve,
    report_csv,
    roc_auc,
    scored_rows,
    seller_baseline,
    weekly_report,
)
from .model import (
    LogisticModel,
    TrainConfig,
    load_model,
    loss_and_gradient,
    predict_batch,
    predict_propensity,
    save_model,
    train,
)
from .simgen import CoefficientSpec, GeneratorConfig, generate

__version__ = "0.1.0"
