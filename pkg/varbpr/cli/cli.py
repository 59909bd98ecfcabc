"""
This file is part of varbpr.

varbpr is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

varbpr is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with varbpr.  If not, see <http://www.gnu.org/licenses/>.
"""

__author__ = "varbpr developers"
__license__ = "GPLv3"

import argparse
import json
import logging
import math
import sys
from datetime import datetime

import numpy as np
import pandas as pd
from scipy import stats

from varbpr import __version__
from varbpr.cli.experiment import Experiment, config_listing
from varbpr.dataio.dataio import compute_signals, export_remap, inject_noise
from varbpr.evaluation.evaluation import evaluate_model, exposure_profile, rank_topk, representation_profile
from varbpr.exceptions import ConfigError, DivergenceError, DomainError
from varbpr.learning.learning import load_checkpoint, save_checkpoint, train

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

PARETO_COLUMNS = ('direction', 'lambda_pos_1', 'lambda_pos_2', 'lambda_neg_1', 'lambda_neg_2',
                  'lambda_neg_3', 'strength', 'ndcg_k', 'aplt_k', 'status', 'on_front')
TABLE_COLUMNS = ('variant', 'recall_k', 'ndcg_k', 'status')
LIKELIHOOD_COLUMNS = ('loss', 'rate', 'epoch', 'likelihood', 'log_likelihood')
TIMING_COLUMNS = ('M', 'N', 'bag_size', 'loss', 'seconds_per_epoch')
EXPOSURE_COLUMNS = ('prior', 'item', 'popularity', 'quality', 'exposure')
REPRESENTATION_COLUMNS = ('strength', 'group', 'count', 'mean_norm', 'uniformity')

SWEEP_STRENGTHS = (2.0, 4.0, 6.0, 8.0, 10.0)
SWEEP_STEPS = 6
ABLATIONS = (('full', {'loss': 'varbpr'}),
             ('no_prior', {'loss': 'varbpr', 'prior': 'uniform'}),
             ('no_vi', {'loss': 'varbpr', 'posterior': 'uniform'}),
             ('no_plugin', {'loss': 'varbpr_elbo'}))
ROBUSTNESS_RATES = (0.05, 0.10)
ROBUSTNESS_LOSSES = ('bpr', 'varbpr')
SCALE_BAG_SIZES = (2, 4, 8, 16)
SCALE_EPOCHS = 3
DIRECTION_PRESETS = ('long_tail', 'quality')
DIRECTION_STRENGTH = 100.0
# long-tail orientation of the signal priors: rarity for positives, popularity and hardness for negatives
LONG_TAIL_POS = (1.0, 0.0, 0.0)
LONG_TAIL_NEG = (0.5, 0.0, 0.5)
FEASIBLE_CAP = 256


def _write_table(rows, columns, path):
    pd.DataFrame(rows, columns=list(columns)).to_csv(path, index=False)
    _logger.info('wrote %s', path)


def _write_json(values, path):
    with open(path, 'w') as f:
        json.dump(values, f, indent=2, sort_keys=True)
    _logger.info('wrote %s', path)


def _finite_or_none(value):
    return float(value) if value is not None and math.isfinite(value) else None


def _load(args, stages=('dataio',)):
    experiment = Experiment.from_file(args.config, output_directory=args.out, seed=args.seed)
    experiment.prepare()
    experiment.run(list(stages))
    experiment.output_directory.mkdir(parents=True, exist_ok=True)
    return experiment


def _progress(experiment):
    return experiment.var.verbose == 'yes'


def _train_and_score(experiment, config, bundle=None, signals=None):
    """Trains one cell of a multi-run study; failures come back as a status."""
    bundle = experiment.bundle if bundle is None else bundle
    signals = experiment.signals if signals is None else signals
    try:
        model, report = train(config, bundle, signals, experiment.eval_config,
                              progress=_progress(experiment), diagnostics=False)
        return model, report, evaluate_model(model, bundle, signals, experiment.eval_config, config.seed), 'ok'
    except (DivergenceError, DomainError) as e:
        _logger.warning('run failed: %s', e)
        return None, None, None, 'failed: ' + ' '.join(str(e).split())


def cmd_train(args):
    started = datetime.now()
    experiment = _load(args, stages=('dataio', 'learning'))
    out = experiment.output_directory
    experiment.report.write(out)
    save_checkpoint(experiment.model, out / 'model.npz', experiment.config_echo())
    export_remap(experiment.log, out)
    experiment.report.write_run_info(out, started, datetime.now())
    return experiment.report


def cmd_evaluate(args):
    experiment = _load(args)
    out = experiment.output_directory
    model, _ = load_checkpoint(out / 'model.npz')
    if (model.n_users, model.n_items) != (experiment.bundle.user_count, experiment.bundle.item_count):
        raise DomainError(f'checkpoint holds {model.n_users} users and {model.n_items} items, '
                          f'the dataset {experiment.bundle.user_count} and {experiment.bundle.item_count}')
    experiment.model = model
    experiment.run(['evaluation'])
    _write_json({'config': experiment.config_echo(), 'metrics': experiment.evaluation},
                out / 'evaluation.json')
    return experiment.evaluation


def sweep_directions(mode='lockstep', steps=SWEEP_STEPS, lambda_pos_3=1.0):
    """(label, lambda_pos, lambda_neg) triples moving the priors from quality towards rarity.

    The positive side trades lambda 1 against lambda 2 over [0, 1], the
    negative side over [0, 0.5] with its hardness exponent fixed at 0.5.
    Lockstep moves both sides together, product crosses every pair.
    """
    if mode not in ('lockstep', 'product'):
        raise ConfigError('grid mode should be lockstep or product')
    if steps < 1:
        raise ConfigError('a sweep needs at least one direction step')
    points = [k / (steps - 1) if steps > 1 else 0.0 for k in range(steps)]
    pos = [(round(t, 10), round(1.0 - t, 10), lambda_pos_3) for t in points]
    neg = [(round(0.5 * t, 10), round(0.5 * (1.0 - t), 10), 0.5) for t in points]
    if mode == 'lockstep':
        return [(f'd{k}', pos[k], neg[k]) for k in range(steps)]
    return [(f'p{a}n{b}', pos[a], neg[b]) for a in range(steps) for b in range(steps)]


def pareto_front(rows):
    """Marks the rows no other successful row beats in both NDCG@K and APLT@K."""
    points = np.array([(row['ndcg_k'], row['aplt_k']) if row['status'] == 'ok' else (np.nan, np.nan)
                       for row in rows], dtype=np.float64).reshape(-1, 2)
    valid = np.all(np.isfinite(points), axis=1)
    for k, row in enumerate(rows):
        if not valid[k]:
            row['on_front'] = False
            continue
        others = points[valid]
        dominated = np.any(np.all(others >= points[k], axis=1) & np.any(others > points[k], axis=1))
        row['on_front'] = not dominated
    return rows


def _spearman(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = np.isfinite(x) & np.isfinite(y)
    if keep.sum() < 2 or np.ptp(x[keep]) == 0 or np.ptp(y[keep]) == 0:
        return None
    return _finite_or_none(stats.spearmanr(x[keep], y[keep])[0])


def cmd_sweep(args):
    experiment = _load(args)
    item = experiment.items['learning']
    strengths = args.strengths or SWEEP_STRENGTHS
    rows = []
    for label, lambda_pos, lambda_neg in sweep_directions(args.grid, args.steps,
                                                          item.inference_settings['lambda_pos'][2]):
        for strength in strengths:
            _logger.info('sweep cell %s, strength %g', label, strength)
            config = item.make_config(loss='varbpr', prior='signals', lambda_pos=lambda_pos,
                                      lambda_neg=lambda_neg, c_pos=float(strength), c_neg=float(strength))
            _, _, metrics, status = _train_and_score(experiment, config)
            rows.append({'direction': label,
                         'lambda_pos_1': lambda_pos[0], 'lambda_pos_2': lambda_pos[1],
                         'lambda_neg_1': lambda_neg[0], 'lambda_neg_2': lambda_neg[1],
                         'lambda_neg_3': lambda_neg[2],
                         'strength': float(strength),
                         'ndcg_k': metrics['ndcg_k'] if metrics else np.nan,
                         'aplt_k': metrics['aplt_k'] if metrics else np.nan,
                         'status': status})
    pareto_front(rows)

    out = experiment.output_directory
    _write_table(rows, PARETO_COLUMNS, out / 'pareto.csv')
    frame = pd.DataFrame(rows)
    summary = {label: {'aplt_strength_spearman': _spearman(group['strength'], group['aplt_k']),
                       'ndcg_strength_spearman': _spearman(group['strength'], group['ndcg_k'])}
               for label, group in frame.groupby('direction', sort=False)}
    _write_json({'config': experiment.config_echo(), 'grid': args.grid, 'directions': summary},
                out / 'pareto.json')
    return rows


def cmd_ablate(args):
    experiment = _load(args)
    item = experiment.items['learning']
    rows = []
    for variant, overrides in ABLATIONS:
        _logger.info('ablation %s', variant)
        _, _, metrics, status = _train_and_score(experiment, item.make_config(**overrides))
        rows.append({'variant': variant,
                     'recall_k': metrics['recall_k'] if metrics else np.nan,
                     'ndcg_k': metrics['ndcg_k'] if metrics else np.nan,
                     'status': status})
    _write_table(rows, TABLE_COLUMNS, experiment.output_directory / 'table.csv')
    return rows


def cmd_robustness(args):
    experiment = _load(args)
    if experiment.items['dataio'].split != 'clean_test':
        raise ConfigError('the robustness study needs the clean_test split')
    item = experiment.items['learning']
    rates = args.rates or ROBUSTNESS_RATES
    rows = []
    for rate in rates:
        bundle = inject_noise(experiment.clean_bundle, rate, experiment.seed_for('noise'))
        signals = compute_signals(bundle, experiment.log)
        for loss in ROBUSTNESS_LOSSES:
            _logger.info('robustness run %s at noise rate %g', loss, rate)
            config = item.make_config(loss=loss)
            _, report = train(config, bundle, signals, experiment.eval_config, progress=_progress(experiment))
            rows.extend({'loss': loss, 'rate': float(rate), 'epoch': row.epoch,
                         'likelihood': row.likelihood, 'log_likelihood': row.log_likelihood}
                        for row in report.rows)
    _write_table(rows, LIKELIHOOD_COLUMNS, experiment.output_directory / 'likelihood.csv')
    return rows


def _bag_split(bag_size):
    if bag_size < 2:
        raise ConfigError('bag sizes should be at least 2')
    M = math.ceil(bag_size / 2)
    return M, bag_size - M


def cmd_scale(args):
    experiment = _load(args)
    item = experiment.items['learning']
    bag_sizes = args.bag_sizes or SCALE_BAG_SIZES
    settings = [('bpr', 1, 1)] + [('varbpr',) + _bag_split(size) for size in bag_sizes]
    rows = []
    for loss, M, N in settings:
        _logger.info('timing %s with M=%d N=%d', loss, M, N)
        config = item.make_config(loss=loss, M=M, N=N, epochs=args.epochs)
        _, report = train(config, experiment.bundle, experiment.signals, experiment.eval_config,
                          progress=_progress(experiment), diagnostics=False)
        rows.append({'M': M, 'N': N, 'bag_size': M + N, 'loss': loss,
                     'seconds_per_epoch': float(np.mean(report.seconds_per_epoch))})

    out = experiment.output_directory
    _write_table(rows, TIMING_COLUMNS, out / 'timing.csv')
    timed = [row for row in rows if row['loss'] == 'varbpr']
    fit = {'slope': None, 'intercept': None, 'r_squared': None}
    if len({row['bag_size'] for row in timed}) >= 2:
        result = stats.linregress([row['bag_size'] for row in timed],
                                  [row['seconds_per_epoch'] for row in timed])
        fit = {'slope': float(result.slope), 'intercept': float(result.intercept),
               'r_squared': float(result.rvalue ** 2)}
    bpr = rows[0]['seconds_per_epoch']
    smallest = [row for row in timed if row['bag_size'] == 2]
    fit['ratio_to_bpr'] = smallest[0]['seconds_per_epoch'] / bpr if smallest and bpr > 0 else None
    _write_json(fit, out / 'timing.json')
    return rows


def feasible_bag_sizes(bundle, cap=FEASIBLE_CAP):
    """Largest (M, N) every user supports, each capped.

    M covers the largest training support, smaller users fill their bags
    with replacement; N is what the user with the most positives can still
    draw without replacement.
    """
    sizes = np.array([len(items) for items in bundle.train_positives], dtype=np.int64)
    if not np.any(sizes):
        raise DomainError('the training set is empty')
    M = int(sizes.max())
    N = int(bundle.item_count - sizes.max() - 1)
    if N < 1:
        raise DomainError('a user has interacted with every item, no negatives are left')
    return min(M, cap), min(N, cap)


def _bag_sizes(args, bundle):
    """M and N overrides from --bag-sizes or --feasible-bags."""
    if args.feasible_bags:
        M, N = feasible_bag_sizes(bundle)
    elif args.bag_sizes:
        M, N = args.bag_sizes
    else:
        return {}
    _logger.info('bags of M=%d positives and N=%d negatives', M, N)
    return {'M': M, 'N': N}


def cmd_direction(args):
    experiment = _load(args)
    item = experiment.items['learning']
    signals = experiment.signals
    bags = _bag_sizes(args, experiment.bundle)
    rows = []
    summary = {}
    for preset in DIRECTION_PRESETS:
        if preset == 'quality' and not signals.has_quality:
            _logger.warning('skipping the quality preset, the dataset has no ratings')
            continue
        _logger.info('direction preset %s at strength %g', preset, args.strength)
        config = item.make_config(loss='varbpr', prior=preset, c_pos=args.strength, c_neg=args.strength,
                                  **bags)
        model, _, metrics, status = _train_and_score(experiment, config)
        if model is None:
            summary[preset] = {'status': status}
            continue
        exposure = exposure_profile(rank_topk(model, experiment.bundle, experiment.eval_config.K),
                                    experiment.bundle.item_count)
        quality = signals.quality if signals.has_quality else np.full(signals.item_count, np.nan)
        rows.extend({'prior': preset, 'item': item_id, 'popularity': signals.popularity[item_id],
                     'quality': quality[item_id], 'exposure': exposure[item_id]}
                    for item_id in range(signals.item_count))
        summary[preset] = {'status': status,
                           'ndcg_k': metrics['ndcg_k'],
                           'aplt_k': metrics['aplt_k'],
                           'exposure_popularity_spearman': _spearman(exposure, signals.popularity),
                           'exposure_quality_spearman': _spearman(exposure, quality)}

    out = experiment.output_directory
    _write_table(rows, EXPOSURE_COLUMNS, out / 'exposure.csv')
    _write_json({'config': experiment.config_echo(), 'strength': args.strength, 'presets': summary,
                 'M': bags.get('M', item.config.M), 'N': bags.get('N', item.config.N)},
                out / 'direction.json')
    export_remap(experiment.log, out)
    return rows


def _head_tail_contrast(head, tail):
    """Head over tail mean norm and the absolute uniformity difference; None where a group is too small."""
    ratio = gap = None
    if head['mean_norm'] and tail['mean_norm']:
        ratio = head['mean_norm'] / tail['mean_norm']
    if head['uniformity'] is not None and tail['uniformity'] is not None:
        gap = abs(head['uniformity'] - tail['uniformity'])
    return {'item_norm_ratio': ratio, 'item_uniformity_gap': gap}


def cmd_representation(args):
    experiment = _load(args)
    item = experiment.items['learning']
    bags = _bag_sizes(args, experiment.bundle)
    strengths = args.strengths or SWEEP_STRENGTHS
    rows = []
    summary = {}
    for strength in strengths:
        _logger.info('long-tail representation at strength %g', strength)
        config = item.make_config(loss='varbpr', prior='signals', lambda_pos=LONG_TAIL_POS,
                                  lambda_neg=LONG_TAIL_NEG, c_pos=float(strength), c_neg=float(strength),
                                  **bags)
        model, _, metrics, status = _train_and_score(experiment, config)
        if model is None:
            summary[f'{strength:g}'] = {'status': status}
            continue
        profile = representation_profile(model, experiment.bundle, experiment.signals, experiment.rng('probe'))
        rows.extend({'strength': float(strength), 'group': group, **values}
                    for group, values in profile.items())
        summary[f'{strength:g}'] = {'status': status, 'ndcg_k': metrics['ndcg_k'], 'aplt_k': metrics['aplt_k'],
                                    **_head_tail_contrast(profile['head_items'], profile['tail_items'])}

    out = experiment.output_directory
    _write_table(rows, REPRESENTATION_COLUMNS, out / 'representation.csv')
    ok = [(float(key), values) for key, values in summary.items() if values['status'] == 'ok']
    _write_json({'config': experiment.config_echo(),
                 'M': bags.get('M', item.config.M), 'N': bags.get('N', item.config.N),
                 'strengths': summary,
                 'aplt_strength_spearman': _spearman([s for s, _ in ok], [v['aplt_k'] for _, v in ok]),
                 'norm_ratio_strength_spearman': _spearman([s for s, _ in ok],
                                                           [v['item_norm_ratio'] or np.nan for _, v in ok])},
                out / 'representation.json')
    return rows


COMMANDS = {'train': cmd_train,
            'evaluate': cmd_evaluate,
            'sweep': cmd_sweep,
            'ablate': cmd_ablate,
            'robustness': cmd_robustness,
            'scale': cmd_scale,
            'direction': cmd_direction,
            'representation': cmd_representation}


def build_parser():
    parser = argparse.ArgumentParser(prog='varbpr',
                                     description='Variational Bayesian Personalized Ranking experiments',
                                     epilog=config_listing(),
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--debug', action='store_true', help='log debug messages')
    verbs = parser.add_subparsers(dest='command', required=True)

    helps = {'train': 'train one model and write epochs.csv and report.json',
             'evaluate': 'evaluate the model.npz of the output directory',
             'sweep': 'direction and strength sweep of the signal priors',
             'ablate': 'full model against its prior, inference and plug-in ablations',
             'robustness': 'likelihood trajectories under injected false positives',
             'scale': 'epoch wall-clock time against the bag size',
             'direction': 'item exposure under the long-tail and quality presets',
             'representation': 'head and tail representation spread as the long-tail prior strengthens'}
    sub = {}
    for name, text in helps.items():
        sub[name] = verbs.add_parser(name, help=text)
        sub[name].add_argument('--config', required=True, help='flat YAML configuration file')
        sub[name].add_argument('--out', default=None, help='output directory, overrides the configuration')
        sub[name].add_argument('--seed', type=int, default=None, help='master seed, overrides the configuration')

    sub['sweep'].add_argument('--grid', choices=('lockstep', 'product'), default='lockstep',
                              help='move both prior sides together or cross them')
    sub['sweep'].add_argument('--steps', type=int, default=SWEEP_STEPS, help='direction steps per side')
    strengths_help = f'temperatures c_pos = c_neg, default {" ".join(map(str, SWEEP_STRENGTHS))}'
    sub['sweep'].add_argument('--strengths', type=float, nargs='+', default=None, help=strengths_help)
    sub['robustness'].add_argument('--rates', type=float, nargs='+', default=None,
                                   help='noise rates, default 0.05 0.10')
    sub['scale'].add_argument('--bag-sizes', type=int, nargs='+', default=None,
                              help='values of M + N, default 2 4 8 16')
    sub['scale'].add_argument('--epochs', type=int, default=SCALE_EPOCHS, help='timed epochs per setting')
    sub['direction'].add_argument('--strength', type=float, default=DIRECTION_STRENGTH,
                                  help='temperature c_pos = c_neg of the presets')
    sub['representation'].add_argument('--strengths', type=float, nargs='+', default=None, help=strengths_help)
    for name in ('direction', 'representation'):
        sizes = sub[name].add_mutually_exclusive_group()
        sizes.add_argument('--bag-sizes', type=int, nargs=2, metavar=('M', 'N'), default=None,
                           help='positives and negatives per bag, overrides the configuration')
        sizes.add_argument('--feasible-bags', action='store_true',
                           help=f'largest bags every user supports, at most {FEASIBLE_CAP} per side')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        COMMANDS[args.command](args)
    except ConfigError as e:
        _logger.error('configuration error: %s', e)
        return EXIT_CONFIG
    except DivergenceError as e:
        _logger.error('%s', e)
        return EXIT_DIVERGED
    except DomainError as e:
        _logger.error('invalid input: %s', e)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
