"""VarBPR - matrix factorization trained with BPR, VarBPR or its ELBO variant"""

# Heading of the unit's keys in the configuration listing of varbpr --help
category = "Learning"
# Configuration variables owned by this unit
controls = [
    {
        "type": "combobox",
        "var": "loss",
        "section": "loss",
        "label": "Loss",
        "options": ["bpr", "varbpr", "varbpr_elbo"],
        "tooltip": "Pairwise BPR, the summarized VarBPR loss or the full double-sum ELBO loss"
    }, {
        "type": "line_edit",
        "var": "d",
        "section": "model",
        "label": "Embedding dimension",
        "tooltip": "Number of latent factors per user and item"
    }, {
        "type": "line_edit",
        "var": "lr",
        "section": "model",
        "label": "Learning rate",
        "tooltip": "Adam step size"
    }, {
        "type": "line_edit",
        "var": "l2",
        "section": "model",
        "label": "Weight decay",
        "tooltip": "L2 penalty on every embedding row touched by a batch"
    }, {
        "type": "line_edit",
        "var": "epochs",
        "section": "model",
        "label": "Epochs",
        "tooltip": "Passes over all training positives"
    }, {
        "type": "line_edit",
        "var": "batch_size",
        "section": "model",
        "label": "Batch size",
        "tooltip": "Bags per update, 1 updates after every bag"
    }
]
