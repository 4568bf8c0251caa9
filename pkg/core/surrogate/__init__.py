"""
代理模型：MLP 分类/回归、随机森林回归、评价指标、网格搜索与模型包
"""

from .bundle import Regressor, SurrogateBundle, load_bundle, save_bundle
from .forest import ForestModel, ForestSpec, fit_rf, predict_rf
from .metrics import Scaler, accuracy, mae, r2
from .mlp import MlpModel, MlpSpec, fit_mlp, loss_and_gradients, predict_mlp
from .search import GridSearchResult, grid_search, kfold_indices

__all__ = [
    'MlpSpec', 'MlpModel', 'fit_mlp', 'predict_mlp', 'loss_and_gradients',
    'ForestSpec', 'ForestModel', 'fit_rf', 'predict_rf',
    'Scaler', 'accuracy', 'r2', 'mae',
    'GridSearchResult', 'grid_search', 'kfold_indices',
    'Regressor', 'SurrogateBundle', 'save_bundle', 'load_bundle',
]
