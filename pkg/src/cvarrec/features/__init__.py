"""Dataset ingestion, feature encoding, item frequencies and the embedding layer."""

from .cache import load_encoded, save_encoded
from .embedding import ITEM_TABLE, EmbeddingBundle, EmbeddingLayer, embed, init_tables, table_name
from .movielens import ML1M_INTERACTIONS, load_movielens, parse_title
from .schema import (
    OOV,
    CategoricalField,
    ContinuousField,
    EncodedDataset,
    FeatureSchema,
    FrequencyTable,
    SampleBatch,
    build_schema,
    encode_batch,
    encode_table,
)
from .synthetic import generate_synthetic, zipf_weights
from .table import CATEGORICAL, CONTINUOUS, MULTI, IngestionError, InteractionTable, object_column

__all__ = [
    "CATEGORICAL", "CONTINUOUS", "ITEM_TABLE", "ML1M_INTERACTIONS", "MULTI", "OOV",
    "CategoricalField", "ContinuousField", "EmbeddingBundle", "EmbeddingLayer",
    "EncodedDataset", "FeatureSchema", "FrequencyTable", "IngestionError",
    "InteractionTable", "SampleBatch", "build_schema", "embed", "encode_batch",
    "encode_table", "generate_synthetic", "init_tables", "load_encoded",
    "load_movielens", "object_column", "parse_title", "save_encoded", "table_name",
    "zipf_weights",
]
