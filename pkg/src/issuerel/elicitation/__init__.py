from .endpoint import (Completion, EndpointConfig, EndpointError, FailureBudgetExceeded, HttpBackend,
                       LogprobsUnsupported, OracleBackend, make_backend)
from .generation import (ResponseParseError, SkipReport, baseline_generate, build_pool,
                         generate_questions, incremental_generate, judge_relevance, load_prompt,
                         parse_issue_list, parse_questions)
from .scoring import (ScoringStats, VerifierScore, build_score_matrix, p_yes_from_logprobs,
                      read_journal, score_question)

__all__ = [
    "Completion", "EndpointConfig", "EndpointError", "FailureBudgetExceeded", "HttpBackend",
    "LogprobsUnsupported", "OracleBackend", "ResponseParseError", "ScoringStats", "SkipReport",
    "VerifierScore", "baseline_generate", "build_pool", "build_score_matrix", "generate_questions",
    "incremental_generate", "judge_relevance", "load_prompt", "make_backend", "p_yes_from_logprobs",
    "parse_issue_list", "parse_questions", "read_journal", "score_question",
]
