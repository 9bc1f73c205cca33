"""Search-style natural language questions to single-table SQL."""

__version__ = "0.1.0"

from .sketch import (  # noqa: F401
    AggOp,
    CondOp,
    Condition,
    Example,
    SqlSketch,
    Table,
    TableSchema,
    lf_equal,
    render_sql,
    validate_sketch,
)
from .executor import QueryResult, ex_equal, execute  # noqa: F401
from .keyword_index import ContentIndex, build_index, extract_matches  # noqa: F401
from .sampling import (  # noqa: F401
    SampleSet,
    sample_exact_match_one,
    sample_random,
    sample_relevance,
)
from .serialize import SerializedInput, serialize_input, tokenize  # noqa: F401
