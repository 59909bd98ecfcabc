"""VarBPR - ranking and exposure metrics, likelihood, Jensen-gap and compliance probes"""

# Heading of the unit's keys in the configuration listing of varbpr --help
category = "Evaluation"
# Configuration variables owned by this unit
controls = [
    {
        "type": "line_edit",
        "var": "K",
        "section": "eval",
        "label": "Cut-off",
        "tooltip": "Length of the top-K lists behind Recall@K, NDCG@K and APLT@K"
    }, {
        "type": "line_edit",
        "var": "eval_every",
        "section": "eval",
        "label": "Evaluation interval",
        "tooltip": "Epochs between diagnostics rows, the last epoch is always evaluated"
    }, {
        "type": "line_edit",
        "var": "probe_bags",
        "section": "eval",
        "label": "Probe bags",
        "tooltip": "Training bags drawn for the Jensen-gap and compliance probes"
    }, {
        "type": "line_edit",
        "var": "likelihood_samples",
        "section": "eval",
        "label": "Likelihood samples",
        "tooltip": "Negatives sampled per held-out positive by the likelihood probe"
    }
]
