"""VarBPR - encodes exposure priors and solves the closed-form bag posteriors"""

# Heading of the unit's keys in the configuration listing of varbpr --help
category = "Inference"
# Configuration variables owned by this unit
controls = [
    {
        "type": "line_edit",
        "var": "c_pos",
        "section": "loss",
        "label": "Positive temperature",
        "tooltip": "Regularization strength pulling the positive posterior towards its prior, use .inf for the prior itself"
    }, {
        "type": "line_edit",
        "var": "c_neg",
        "section": "loss",
        "label": "Negative temperature",
        "tooltip": "Regularization strength pulling the negative posterior towards its prior"
    }, {
        "type": "line_edit",
        "var": "tau",
        "section": "loss",
        "label": "Hardness temperature",
        "tooltip": "Softmax temperature of the bag-wise hardness factor"
    }, {
        "type": "line_edit",
        "var": "lambda_pos",
        "section": "loss",
        "label": "Exposure exponents",
        "tooltip": "Exponents of rarity, quality and hardness in the positive prior, e.g. [1.0, 1.0, 1.0]"
    }, {
        "type": "line_edit",
        "var": "lambda_neg",
        "section": "loss",
        "label": "Suppression exponents",
        "tooltip": "Exponents of popularity, bad quality and hardness in the negative prior"
    }, {
        "type": "combobox",
        "var": "prior",
        "section": "loss",
        "label": "Prior",
        "options": ["signals", "uniform", "long_tail", "quality"],
        "tooltip": "Signal based priors, uniform priors or one of the exposure presets"
    }, {
        "type": "combobox",
        "var": "posterior",
        "section": "loss",
        "label": "Posterior",
        "options": ["variational", "uniform"],
        "tooltip": "Closed-form variational posteriors or uniform bag weights"
    }
]
