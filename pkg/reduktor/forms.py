import json
import logging
from dataclasses import dataclass, field

import numpy as np
from django import forms

from .channel_gen import BathModel, model_source
from .dstoch_core import validate_dstoch
from .exceptions import ConfigParseError
from .reduced_scalar import ScalarInput, lifted_source
from .volterra import MatrixSource, SolverConfig, TimeGrid

logger = logging.getLogger(__name__)

SCALAR_KINDS = [
    ('constant', 'Constant'),
    ('piecewise', 'Piecewise constant'),
    ('trig', 'Mean plus cosine'),
    ('tabulated', 'Tabulated'),
]

SCALAR_METHODS = [
    ('march', 'Trapezoidal marching'),
    ('delay', 'Delay recurrence, alternating input'),
    ('trig', 'Trigonometric ODE system'),
]

MC_COMMANDS = ('simulate', 'compare')


def _complex_array(raw, name):
    arr = np.asarray(raw, dtype=float)
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise forms.ValidationError(f"{name} entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _error_text(form):
    return '; '.join(f"{name}: {' '.join(messages)}" for name, messages in form.errors.items())


class GridForm(forms.Form):
    t_max = forms.FloatField()
    steps = forms.IntegerField(min_value=1)

    def clean_t_max(self):
        t_max = self.cleaned_data['t_max']
        if not t_max > 0:
            raise forms.ValidationError('t_max must be positive')
        return t_max

    def build(self):
        return TimeGrid(self.cleaned_data['t_max'], self.cleaned_data['steps'])


class ScalarInputForm(forms.Form):
    kind = forms.ChoiceField(choices=SCALAR_KINDS)
    c = forms.FloatField(required=False, min_value=0.0, max_value=1.0)
    tau = forms.FloatField(required=False)
    pattern = forms.JSONField(required=False)
    mean = forms.FloatField(required=False)
    amplitude = forms.FloatField(required=False)
    times = forms.JSONField(required=False)
    values = forms.JSONField(required=False)

    REQUIRED = {
        'constant': ('c',),
        'piecewise': ('tau', 'pattern'),
        'trig': ('mean', 'amplitude'),
        'tabulated': ('times', 'values'),
    }

    def clean(self):
        cleaned = super().clean()
        kind = cleaned.get('kind')
        for name in self.REQUIRED.get(kind, ()):
            if cleaned.get(name) is None:
                self.add_error(name, f'required for {kind} input')
        return cleaned

    def build(self):
        data = self.cleaned_data
        kind = data['kind']
        if kind == 'constant':
            return ScalarInput.constant(data['c'])
        if kind == 'piecewise':
            return ScalarInput.piecewise(data['tau'], data['pattern'])
        if kind == 'trig':
            return ScalarInput.trig(data['mean'], data['amplitude'])
        return ScalarInput.tabulated(data['times'], data['values'])


@dataclass(eq=False)
class RunConfig:
    command: str
    nu: float
    grid: TimeGrid
    n: int = None
    model: BathModel = None
    constant: object = None
    scalar: ScalarInput = None
    options: dict = field(default_factory=dict)

    def solver_config(self):
        return SolverConfig(self.nu, self.grid, self.options.get('series_cap'))

    def source(self, workers=None):
        if self.model is not None:
            return model_source(self.model, workers)
        if self.constant is not None:
            return MatrixSource.constant(self.constant)
        if self.scalar is not None:
            return lifted_source(self.scalar, self.n)
        return None

    @property
    def T(self):
        T = self.options.get('T')
        return T if T is not None else self.grid.t_max


class RunConfigForm(forms.Form):
    B = forms.JSONField(required=False)
    n = forms.IntegerField(required=False, min_value=1)
    n2 = forms.IntegerField(required=False, min_value=1)
    basis = forms.JSONField(required=False)
    constant = forms.JSONField(required=False)
    scalar = forms.JSONField(required=False)
    nu = forms.FloatField(required=False, min_value=0.0)
    grid = forms.JSONField(required=False)
    R = forms.IntegerField(required=False, min_value=100)
    seed = forms.IntegerField(required=False, min_value=0)
    series_cap = forms.IntegerField(required=False, min_value=0)
    T = forms.FloatField(required=False)
    tau = forms.FloatField(required=False)
    delta_threshold = forms.FloatField(required=False, max_value=1.0)
    epsilon = forms.FloatField(required=False)
    method = forms.ChoiceField(required=False, choices=SCALAR_METHODS)
    intervals = forms.IntegerField(required=False, min_value=2)
    samples = forms.IntegerField(required=False, min_value=2)

    def __init__(self, *args, command=None, **kwargs):
        self.command = command
        super().__init__(*args, **kwargs)

    def _sub_form(self, form_class, name):
        raw = self.cleaned_data.get(name)
        if not isinstance(raw, dict):
            raise forms.ValidationError(f'{name} must be an object')
        sub = form_class(raw)
        if not sub.is_valid():
            raise forms.ValidationError(_error_text(sub))
        return sub.build()

    def clean_grid(self):
        if self.cleaned_data.get('grid') is None:
            return None
        return self._sub_form(GridForm, 'grid')

    def clean_scalar(self):
        if self.cleaned_data.get('scalar') is None:
            return None
        return self._sub_form(ScalarInputForm, 'scalar')

    def clean(self):
        cleaned = super().clean()
        sources = [name for name in ('B', 'constant', 'scalar') if cleaned.get(name) is not None]
        scalar_only = self.command == 'scalar'

        if scalar_only:
            method = cleaned.get('method') or 'march'
            cleaned['method'] = method
            if method == 'march' and cleaned.get('scalar') is None and 'scalar' not in self.errors:
                self.add_error('scalar', 'required for the march method')
            if method == 'delay' and cleaned.get('tau') is None:
                self.add_error('tau', 'required for the delay method')
        elif len(sources) != 1 and not self.errors:
            raise forms.ValidationError('exactly one of B, constant, scalar is required')

        if 'B' in sources:
            for name in ('n', 'n2'):
                if cleaned.get(name) is None:
                    self.add_error(name, 'required with B')
        if 'scalar' in sources and not scalar_only and cleaned.get('n') is None:
            self.add_error('n', 'required with a scalar input')

        if cleaned.get('nu') is None and not (scalar_only and cleaned.get('method') == 'trig'):
            if self.command != 'genericity':
                self.add_error('nu', 'This field is required.')
        if cleaned.get('grid') is None and 'grid' not in self.errors:
            if not (scalar_only and cleaned.get('method') == 'delay'):
                self.add_error('grid', 'This field is required.')
        if self.command in MC_COMMANDS and cleaned.get('R') is None:
            self.add_error('R', f'required for {self.command}')
        return cleaned

    def build(self):
        data = self.cleaned_data
        options = {
            key: data.get(key)
            for key in ('R', 'seed', 'series_cap', 'T', 'tau', 'delta_threshold', 'epsilon', 'method', 'intervals', 'samples')
            if data.get(key) not in (None, '')
        }
        config = RunConfig(
            command=self.command,
            nu=data.get('nu') if data.get('nu') is not None else 1.0,
            grid=data.get('grid'),
            n=data.get('n'),
            scalar=data.get('scalar'),
            options=options,
        )
        if data.get('B') is not None:
            blocks = _complex_array(data['B'], 'B')
            expected = (data['n2'], data['n2'], data['n'], data['n'])
            if blocks.shape != expected:
                raise ConfigParseError(f"B has shape {blocks.shape}, expected {expected}")
            basis = None if data.get('basis') is None else _complex_array(data['basis'], 'basis')
            config.model = BathModel(blocks, basis)
        elif data.get('constant') is not None:
            config.constant = validate_dstoch(data['constant'])
            config.n = config.constant.n
        return config


def load_run_config(path, command):
    """Read and validate a JSON run file; problems with the file itself raise ConfigParseError."""
    try:
        with open(path, encoding='utf-8') as handle:
            raw = json.load(handle)
    except OSError as e:
        raise ConfigParseError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigParseError(f"{path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{path} must hold a JSON object")

    form = RunConfigForm(raw, command=command)
    if not form.is_valid():
        raise ConfigParseError(_error_text(form))
    try:
        config = form.build()
    except forms.ValidationError as e:
        raise ConfigParseError('; '.join(e.messages))
    except (TypeError, ValueError) as e:
        raise ConfigParseError(f"malformed matrix data: {e}")
    logger.info(f"Loaded {command} run file {path}")
    return config
