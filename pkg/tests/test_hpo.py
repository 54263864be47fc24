"""
超参数优化测试：搜索空间、试验账本、BO-GP 与 BO-TPE
"""

import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from src.execution.executor import TrialExecutor
from src.hpo.gp import GpSurrogate, bo_gp_optimize, expected_improvement, matern52
from src.hpo.space import CategoricalParam, Condition, IntParam, SearchSpace, TrialLedger, parse_param
from src.hpo.tpe import CategoricalParzen, TpeProposer, bo_tpe_optimize
from src.utils.errors import ConfigError, DataError


class TestSearchSpace(unittest.TestCase):
    """搜索空间测试"""

    def test_parse_params(self):
        """测试参数描述字符串的解析"""
        p = parse_param('k', 'int:2:15')
        self.assertEqual((p.low, p.high, p.log), (2, 15, False))
        self.assertTrue(parse_param('lr', 'real:0.001:1:log').log)
        self.assertEqual(parse_param('kind', 'cat:linear|rbf').choices, ('linear', 'rbf'))
        with self.assertRaises(ConfigError):
            parse_param('x', 'int:5')
        with self.assertRaises(ConfigError):
            parse_param('x', 'float:0:1')
        with self.assertRaises(ConfigError):
            parse_param('x', 'int:3:1')

    def test_conditional_param(self):
        """测试条件参数只在父参数取对应值时激活"""
        space = SearchSpace.parse({
            'degree': 'int:2:5@kernel=poly',
            'kernel': 'cat:rbf|poly',
        })
        self.assertEqual(space.names, ['kernel', 'degree'])
        self.assertTrue(space.is_conditional)
        self.assertEqual(space.active({'kernel': 'rbf'}), ['kernel'])
        self.assertEqual(space.active({'kernel': 'poly'}), ['kernel', 'degree'])
        self.assertEqual(space.from_unit([0.0, 0.0]), {'kernel': 'rbf'})
        self.assertEqual(space.from_unit([0.9, 1.0]), {'kernel': 'poly', 'degree': 5})
        with self.assertRaises(ConfigError):
            space.validate({'kernel': 'rbf', 'degree': 3})
        with self.assertRaises(ConfigError):
            space.validate({'kernel': 'poly'})

    def test_dependency_cycle(self):
        """测试条件依赖成环"""
        with self.assertRaises(ConfigError):
            SearchSpace([
                CategoricalParam('a', ('x', 'y'), Condition('b', 1)),
                IntParam('b', 1, 2, condition=Condition('a', 'x')),
            ])

    def test_missing_parent(self):
        """测试父参数不存在"""
        with self.assertRaises(ConfigError):
            SearchSpace.parse({'degree': 'int:2:5@kernel=poly'})

    def test_unit_round_trip(self):
        """测试整数参数在单位区间上的映射"""
        p = IntParam('k', 2, 15)
        self.assertEqual(p.from_unit(0.0), 2)
        self.assertEqual(p.from_unit(1.0), 15)
        self.assertEqual(p.from_unit(p.to_unit(7)), 7)
        self.assertEqual(SearchSpace([p]).cardinality, 14)


class TestTrialLedger(unittest.TestCase):
    """试验账本测试"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_incumbent_trace(self):
        """测试当前最优轨迹非增，失败试验不影响"""
        ledger = TrialLedger('demo')
        for value in (5.0, 7.0, None, 3.0, 4.0):
            ledger.record({'k': 1}, value)
        self.assertEqual(ledger.incumbent_trace(), [5.0, 5.0, 5.0, 3.0, 3.0])
        self.assertEqual(ledger.incumbent().index, 3)
        trials, values = ledger.imputed_objectives()
        self.assertTrue(trials[2].failed)
        self.assertEqual(values[2], 7.0)

    def test_all_failed(self):
        """测试全部试验失败"""
        ledger = TrialLedger('demo')
        ledger.record({'k': 1}, None, error='boom')
        ledger.record({'k': 2}, float('nan'))
        with self.assertRaises(DataError):
            ledger.incumbent()

    def test_to_csv(self):
        """测试导出 CSV"""
        ledger = TrialLedger('demo')
        ledger.record({'k': 3}, 1.5)
        ledger.record({'k': 4}, None, error='boom')
        path = ledger.to_csv(Path(self.test_dir) / 'trials' / 'demo.csv')
        frame = pd.read_csv(path)
        self.assertEqual(frame.columns.tolist(), ['index', 'assignment', 'objective', 'wall_time', 'status'])
        self.assertEqual(frame['status'].tolist(), ['ok', 'failed'])
        self.assertEqual(frame['assignment'][0], '{"k": 3}')


class TestGaussianProcess(unittest.TestCase):
    """GP 代理模型测试"""

    def test_single_observation(self):
        """测试只有一个观测点：该点的后验均值等于观测值，方差接近 0"""
        gp = GpSurrogate().fit(np.array([[0.3]]), np.array([2.5]), optimize=False)
        mean, var = gp.predict(np.array([[0.3], [0.9]]))
        self.assertAlmostEqual(mean[0], 2.5)
        self.assertLess(var[0], 1e-4)
        self.assertGreater(var[1], var[0])

    def test_interpolates_observations(self):
        """测试拟合后在观测点附近插值"""
        X = np.linspace(0, 1, 6)[:, None]
        y = np.sin(4 * X[:, 0])
        gp = GpSurrogate().fit(X, y, rng=np.random.default_rng(0))
        mean, _ = gp.predict(X)
        np.testing.assert_allclose(mean, y, atol=0.1)

    def test_posterior_against_direct_solve(self):
        """测试固定超参数时后验均值/方差与直接解线性方程组一致"""
        rng = np.random.default_rng(3)
        X = rng.random((12, 2))
        y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2
        Xs = rng.random((7, 2))
        lengthscales, signal, noise = np.array([0.4, 0.7]), 1.3, 1e-3
        K = matern52(X, X, lengthscales, signal) + noise * np.eye(len(X))
        Ks = matern52(Xs, X, lengthscales, signal)
        for normalize_y in (False, True):
            with self.subTest(normalize_y=normalize_y):
                gp = GpSurrogate(lengthscales, signal, noise, normalize_y=normalize_y).fit(X, y, optimize=False)
                mean, var = gp.predict(Xs)
                shift, scale = (y.mean(), y.std()) if normalize_y else (0.0, 1.0)
                expected_mean = shift + scale * (Ks @ np.linalg.solve(K, (y - shift) / scale))
                expected_var = scale ** 2 * (signal - np.sum(Ks * np.linalg.solve(K, Ks.T).T, axis=1))
                np.testing.assert_allclose(mean, expected_mean, rtol=1e-6, atol=1e-9)
                np.testing.assert_allclose(var, expected_var, rtol=1e-6, atol=1e-9)

    def test_expected_improvement(self):
        """测试期望改进：零方差时退化为 max(best - mean, 0)"""
        ei = expected_improvement(np.array([1.0, 3.0]), np.array([0.0, 0.0]), best=2.0)
        np.testing.assert_allclose(ei, [1.0, 0.0])
        self.assertGreater(expected_improvement(np.array([3.0]), np.array([1.0]), best=2.0)[0], 0.0)

    def test_predict_before_fit(self):
        """测试未拟合就预测"""
        with self.assertRaises(ConfigError):
            GpSurrogate().predict(np.zeros((1, 1)))


class TestBoGp(unittest.TestCase):
    """BO-GP 测试"""

    def setUp(self):
        self.space = SearchSpace.parse({'k': 'int:2:15'})

    def test_quadratic_over_integers(self):
        """测试 (k-7)^2，k∈[2,15]，预算 20 -> k=7"""
        ledger = TrialLedger('k')
        best = bo_gp_optimize(lambda a: (a['k'] - 7) ** 2, self.space, budget=20, seed=0, ledger=ledger)
        self.assertEqual(best.assignment['k'], 7)
        self.assertEqual(best.objective, 0.0)
        # 有限空间被穷尽后提前结束
        self.assertLessEqual(len(ledger), 14)

    def test_budget_one(self):
        """测试预算为 1 -> 只评估一次"""
        ledger = TrialLedger('k')
        best = bo_gp_optimize(lambda a: float(a['k']), self.space, budget=1, ledger=ledger)
        self.assertEqual(len(ledger), 1)
        self.assertEqual(best.index, 0)

    def test_single_point_space(self):
        """测试空间只有一个点"""
        ledger = TrialLedger('k')
        best = bo_gp_optimize(lambda a: 1.0, SearchSpace.parse({'k': 'int:4:4'}), budget=10, ledger=ledger)
        self.assertEqual(best.assignment, {'k': 4})
        self.assertEqual(len(ledger), 1)

    def test_real_space(self):
        """测试实数空间上的收敛"""
        space = SearchSpace.parse({'x': 'real:-2:2'})
        best = bo_gp_optimize(lambda a: (a['x'] - 0.5) ** 2, space, budget=15, seed=1, n_init=4)
        self.assertLess(abs(best.assignment['x'] - 0.5), 0.3)

    def test_failures_are_recorded(self):
        """测试目标函数抛异常时记为失败并继续"""
        ledger = TrialLedger('k')

        def objective(a):
            if a['k'] % 2:
                raise ValueError('odd')
            return float(a['k'])

        best = bo_gp_optimize(objective, self.space, budget=8, seed=0, ledger=ledger)
        self.assertEqual(best.assignment['k'] % 2, 0)
        self.assertEqual(len(ledger), 8)

    def test_rejects_conditional_space(self):
        """测试 BO-GP 不接受条件空间"""
        space = SearchSpace.parse({'kernel': 'cat:rbf|poly', 'degree': 'int:2:5@kernel=poly'})
        with self.assertRaises(ConfigError):
            bo_gp_optimize(lambda a: 0.0, space, budget=3)
        with self.assertRaises(ConfigError):
            bo_gp_optimize(lambda a: 0.0, self.space, budget=0)


class TestBoTpe(unittest.TestCase):
    """BO-TPE 测试"""

    def setUp(self):
        self.space = SearchSpace.parse({
            'kernel': 'cat:rbf|poly',
            'degree': 'int:2:5@kernel=poly',
            'gamma': 'real:0.01:10:log',
        })

    def test_propose_picks_best_ratio(self):
        """测试提案选中候选点中 l/g 最大者"""
        ledger = TrialLedger('tpe')
        rng = np.random.default_rng(0)
        for _ in range(8):
            a = self.space.sample(rng)
            ledger.record(a, float(a['gamma']))
        trials, values = ledger.imputed_objectives()
        proposal = TpeProposer(self.space, n_candidates=16).propose(trials, values, rng)
        self.assertEqual(len(proposal.candidates), 16)
        self.assertEqual(proposal.assignment, proposal.candidates[int(np.argmax(proposal.scores))])
        for c in proposal.candidates:
            self.space.validate(c)

    def test_split(self):
        """测试好/坏两组划分"""
        proposer = TpeProposer(self.space, gamma=0.25)
        good, bad = proposer.split(np.array([4.0, 1.0, 3.0, 2.0]))
        self.assertEqual(good.tolist(), [1])
        self.assertEqual(sorted(bad.tolist()), [0, 2, 3])
        good, bad = proposer.split(np.array([1.0, 2.0]))
        self.assertEqual((len(good), len(bad)), (1, 1))

    def test_budget_one(self):
        """测试预算为 1 -> 只评估一次"""
        ledger = TrialLedger('tpe')
        bo_tpe_optimize(lambda a: 1.0, self.space, budget=1, ledger=ledger)
        self.assertEqual(len(ledger), 1)

    def test_optimizes_conditional_space(self):
        """测试条件空间上的优化，所有评估的配置都合法"""
        ledger = TrialLedger('tpe')

        def objective(a):
            penalty = 0.0 if a['kernel'] == 'poly' and a['degree'] == 3 else 1.0
            return penalty + abs(np.log10(a['gamma']))

        best = bo_tpe_optimize(objective, self.space, budget=30, seed=2, ledger=ledger)
        self.assertEqual(len(ledger), 30)
        for t in ledger.snapshot():
            self.space.validate(t.assignment)
        self.assertLess(best.objective, 1.0)
        trace = ledger.incumbent_trace()
        self.assertTrue(all(b <= a for a, b in zip(trace, trace[1:])))

    def test_good_category_probability_rises(self):
        """测试只有一个类别取值好时，l(x) 选中它的概率与实际提案比例都随轮次上升"""
        space = SearchSpace.parse({'c': 'cat:a|b|c|d', 'x': 'real:0:1'})
        param = next(p for p in space if p.name == 'c')
        proposer = TpeProposer(space)

        def objective(a):
            return (0.0 if a['c'] == 'a' else 1.0) + a['x']

        def good_probability(trials, values, n):
            good, _ = proposer.split(values[:n])
            return CategoricalParzen(param, [trials[i].assignment['c'] for i in good]).pdf_value('a')

        early, late = [], []
        for seed in range(5):
            ledger = TrialLedger('tpe')
            bo_tpe_optimize(objective, space, budget=30, seed=seed, ledger=ledger)
            trials, values = ledger.imputed_objectives()
            with self.subTest(seed=seed):
                self.assertGreaterEqual(good_probability(trials, values, 30),
                                        good_probability(trials, values, 10))
            chosen = [t.assignment['c'] == 'a' for t in trials]
            early.append(np.mean(chosen[:5]))
            late.append(np.mean(chosen[20:]))
        self.assertGreater(np.mean(late), np.mean(early))
        self.assertGreater(np.mean(late), 0.6)

    def test_parallel_width(self):
        """测试并发评估宽度不改变评估次数"""
        ledger = TrialLedger('tpe')
        bo_tpe_optimize(lambda a: a['gamma'], self.space, budget=9, seed=0, width=3, ledger=ledger)
        self.assertEqual(len(ledger), 9)
        self.assertEqual([t.index for t in ledger.snapshot()], list(range(9)))

    def test_invalid_gamma(self):
        """测试非法 gamma"""
        with self.assertRaises(ConfigError):
            TpeProposer(self.space, gamma=1.0)


class TestTrialExecutor(unittest.TestCase):
    """目标函数执行器测试"""

    def test_captures_errors(self):
        """测试异常与非有限值被捕获"""
        executor = TrialExecutor(width=2)
        results = executor.run_batch(lambda a: 1.0 / a['x'], [{'x': 1}, {'x': 0}, {'x': 2}])
        self.assertEqual([r.index for r in results], [0, 1, 2])
        self.assertEqual(results[0].value, 1.0)
        self.assertIn('ZeroDivisionError', results[1].error)
        self.assertEqual(executor.execute(lambda a: float('inf'), {}).value, None)


if __name__ == '__main__':
    unittest.main()
