from .build import BuildConfig, BuildReport, StageError, build_dataset
from .resources import (
    ConversationTemplate,
    CorrelationRule,
    ExplanationTemplate,
    Lexicon,
    LexiconEntry,
    PromptTemplateSet,
    ResourceError,
    default_vocabulary,
    load_explanations,
    load_rules,
    load_vocabulary,
)
from .stages import (
    ConversationExpander,
    CorrelationEnricher,
    ExpansionError,
    ExplanationGenerator,
    LabelRefiner,
    enrich_correlations,
    expand_conversations,
    explained_answer,
    generate_explanations,
    interleave,
    mcq_options,
    record_text_length,
    refine_labels,
)

__all__ = [
    "BuildConfig",
    "BuildReport",
    "ConversationExpander",
    "ConversationTemplate",
    "CorrelationEnricher",
    "CorrelationRule",
    "ExpansionError",
    "ExplanationGenerator",
    "ExplanationTemplate",
    "LabelRefiner",
    "Lexicon",
    "LexiconEntry",
    "PromptTemplateSet",
    "ResourceError",
    "StageError",
    "build_dataset",
    "default_vocabulary",
    "enrich_correlations",
    "expand_conversations",
    "explained_answer",
    "generate_explanations",
    "interleave",
    "load_explanations",
    "load_rules",
    "load_vocabulary",
    "mcq_options",
    "record_text_length",
    "refine_labels",
]
