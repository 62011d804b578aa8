"""Matched-pair study designs via tripartite network flow.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from ._core import (  # noqa: F401
    BalanceRow,
    ClusterAssignment,
    CostConfig,
    CptResult,
    GapSummary,
    Interval,
    MatchedPair,
    MatchedPairs,
    OddsRatioResult,
    PairedContingencyTable,
    SubmissionRecord,
    Corpus,
    SyntheticParams,
    TreatmentAssignment,
    __version__,
    assign_treatment,
    balance_table,
    binomial_tail,
    classification_permutation_test,
    clopper_pearson,
    compute_institution_ranking,
    conditional_odds_ratio,
    cosine_similarity,
    dichotomize_decision,
    emit_plot_data,
    filter_borderline,
    generate_synthetic_corpus,
    jaccard_similarity,
    kmeans,
    load_corpus,
    match_costs,
    match_stratified,
    mcnemar_exact,
    normalized_levenshtein,
    pairwise_similarity,
    ranking_gap_summary,
    run_study,
    save_corpus,
    similarity_gain,
    smd,
    spectral_clustering,
    tabulate_pairs,
)

__all__ = [name for name in dir() if not name.startswith("_")]
