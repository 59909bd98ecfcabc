"""VarBPR - draws enriched interactions (user, M positives, N negatives) for training"""

# Heading of the unit's keys in the configuration listing of varbpr --help
category = "Sampling"
# Configuration variables owned by this unit
controls = [
    {
        "type": "line_edit",
        "var": "M",
        "section": "loss",
        "label": "Positives per bag",
        "tooltip": "Number of positives in each enriched interaction"
    }, {
        "type": "line_edit",
        "var": "N",
        "section": "loss",
        "label": "Negatives per bag",
        "tooltip": "Number of sampled negatives in each enriched interaction"
    }
]
