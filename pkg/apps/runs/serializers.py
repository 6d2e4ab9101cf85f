# ==============================================
# COMMAND CONFIG SERIALIZERS
# ==============================================
"""
Validation for the JSON configs of every command.

Configs are overlaid on RECON_DEFAULTS before validation, so fields
here only declare types and ranges. Unknown keys are rejected at every
nesting level and errors are reported with their dotted key path.
"""

import copy
import json

from django.conf import settings
from rest_framework import serializers

from apps.core.exceptions import ConfigurationError
from apps.neuralnet.model import INPUT_MODES

METHODS = ('mlem', 'em-filter', 'kmri', 'dip-admm')
DENOISE_METHODS = ('gaussian', 'nlm', 'dip')
# Root seeds are stored in Run.seed, a signed 64-bit column
MAX_SEED = 2 ** 63 - 1


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


class PositiveFloatField(serializers.FloatField):
    default_error_messages = {'not_positive': 'Ensure this value is greater than 0.'}

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if not value > 0:
            self.fail('not_positive')
        return value


def _pair():
    return serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2)


# ==============================================
# SHARED BLOCKS
# ==============================================

class GridSerializer(StrictSerializer):
    width = serializers.IntegerField(min_value=1)
    height = serializers.IntegerField(min_value=1)
    pixel_size_mm = PositiveFloatField()


class GeometrySerializer(StrictSerializer):
    n_angles = serializers.IntegerField(min_value=1)
    n_bins = serializers.IntegerField(min_value=1)
    bin_size_mm = PositiveFloatField()


class EllipseSerializer(StrictSerializer):
    center_mm = _pair()
    axes_mm = _pair()
    tissue = serializers.CharField(max_length=40)
    rotation_rad = serializers.FloatField(default=0.0)


class TumorSerializer(StrictSerializer):
    center_mm = _pair()
    diameter_mm = PositiveFloatField()
    activity = serializers.FloatField(min_value=0)


class PhantomSerializer(StrictSerializer):
    activities = serializers.DictField(child=serializers.FloatField(min_value=0))
    prior_intensities = serializers.DictField(child=serializers.FloatField(), required=False)
    tumor_activity = serializers.FloatField(min_value=0)
    tumor_diameter_mm = PositiveFloatField()
    include_tumors = serializers.BooleanField(default=True)
    seed = serializers.IntegerField(min_value=0, required=False)
    prior_noise = serializers.FloatField(min_value=0, default=0.0)
    ellipses = EllipseSerializer(many=True, required=False)
    tumors = TumorSerializer(many=True, required=False)
    # External import: raw images replace the procedural phantom
    activity_image = serializers.CharField(required=False)
    prior_image = serializers.CharField(required=False)

    def validate(self, attrs):
        if ('activity_image' in attrs) != ('prior_image' in attrs):
            raise serializers.ValidationError(
                {'prior_image': ['activity_image and prior_image must be given together.']}
            )
        return attrs


class CountsSerializer(StrictSerializer):
    total_counts = PositiveFloatField()
    s_fraction = serializers.FloatField(min_value=0, max_value=0.999999)
    thin_ratio = PositiveFloatField(max_value=1.0)
    n_realizations = serializers.IntegerField(min_value=0)
    tumor_difference = serializers.BooleanField()


class NetworkSerializer(StrictSerializer):
    depth = serializers.IntegerField(min_value=2)
    base_channels = serializers.IntegerField(min_value=1)
    negative_slope = serializers.FloatField(min_value=0)
    kernel_size = serializers.IntegerField(min_value=1, default=3)


class LbfgsSerializer(StrictSerializer):
    memory = serializers.IntegerField(min_value=1)
    c1 = PositiveFloatField()
    c2 = PositiveFloatField(max_value=1.0)
    gradient_tolerance = serializers.FloatField(min_value=0)

    def validate(self, attrs):
        if not attrs['c1'] < attrs['c2']:
            raise serializers.ValidationError({'c2': ['Must be greater than c1.']})
        return attrs


class AdmmSerializer(StrictSerializer):
    rho = PositiveFloatField()
    outer_iterations = serializers.IntegerField(min_value=1)
    em_subiterations = serializers.IntegerField(min_value=1)
    network_iterations = serializers.IntegerField(min_value=0)
    input_mode = serializers.ChoiceField(choices=INPUT_MODES)


class FirstOrderSerializer(StrictSerializer):
    adam_step_size = PositiveFloatField()
    nag_step_size = PositiveFloatField()
    nag_momentum = serializers.FloatField(min_value=0, max_value=0.999999)


class MlemSerializer(StrictSerializer):
    iterations = serializers.IntegerField(min_value=0)
    filter_fwhm_mm = PositiveFloatField()


class KernelSerializer(StrictSerializer):
    patch_radius = serializers.IntegerField(min_value=0)
    search_radius = serializers.IntegerField(min_value=1)
    neighbors = serializers.IntegerField(min_value=1)
    normalize = serializers.BooleanField()
    sigma = PositiveFloatField(required=False)


class NlmSerializer(StrictSerializer):
    window = serializers.IntegerField(min_value=1)
    patch = serializers.IntegerField(min_value=1)
    h = PositiveFloatField(required=False)


class DenoiseBlockSerializer(StrictSerializer):
    epochs = serializers.IntegerField(min_value=1)
    gaussian_fwhm_px = PositiveFloatField()
    input_mode = serializers.ChoiceField(choices=INPUT_MODES)


class CompareSerializer(StrictSerializer):
    iterations = serializers.IntegerField(min_value=1)
    reference_iterations = serializers.IntegerField(min_value=1)
    input_mode = serializers.ChoiceField(choices=INPUT_MODES)

    def validate(self, attrs):
        if attrs['reference_iterations'] < attrs['iterations']:
            raise serializers.ValidationError({'reference_iterations': ['Must be >= iterations.']})
        return attrs


class MetricsBlockSerializer(StrictSerializer):
    checkpoint_stride = serializers.IntegerField(min_value=1)
    background_roi_count = serializers.IntegerField(min_value=1)
    background_roi_diameter_mm = PositiveFloatField()


# ==============================================
# COMMAND CONFIGS
# ==============================================

class SimulateConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)
    grid = GridSerializer()
    geometry = GeometrySerializer()
    phantom = PhantomSerializer()
    counts = CountsSerializer()
    metrics = MetricsBlockSerializer()


class ReconstructConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)
    simulation = serializers.CharField()
    method = serializers.ChoiceField(choices=METHODS)
    data = serializers.ChoiceField(choices=('full', 'realizations'), default='realizations')
    tumor_free = serializers.BooleanField(default=False)
    rhos = serializers.ListField(child=PositiveFloatField(), min_length=1, required=False)
    checkpoint_stride = serializers.IntegerField(min_value=1)
    admm = AdmmSerializer()
    network = NetworkSerializer()
    lbfgs = LbfgsSerializer()
    mlem = MlemSerializer()
    kernel = KernelSerializer()

    def validate(self, attrs):
        if 'rhos' in attrs and attrs['method'] != 'dip-admm':
            raise serializers.ValidationError({'rhos': ['Only dip-admm accepts a list of rho values.']})
        return attrs


class DenoiseCaseSerializer(StrictSerializer):
    name = serializers.RegexField(r'^[A-Za-z0-9_.-]+$', max_length=80)
    noisy = serializers.CharField()
    guide = serializers.CharField(required=False)
    reference = serializers.CharField(required=False)
    rois = serializers.CharField(required=False)


class DenoiseConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)
    method = serializers.ChoiceField(choices=DENOISE_METHODS)
    cases = DenoiseCaseSerializer(many=True, allow_empty=False)
    lesion = serializers.CharField(default='lesion')
    muscle = serializers.ListField(child=serializers.CharField(), min_length=1, default=lambda: ['muscle'])
    denoise = DenoiseBlockSerializer()
    nlm = NlmSerializer()
    network = NetworkSerializer()
    lbfgs = LbfgsSerializer()

    def validate(self, attrs):
        if attrs['method'] in ('nlm', 'dip'):
            missing = {
                str(index): {'guide': [f"A guide image is required for method '{attrs['method']}'."]}
                for index, case in enumerate(attrs['cases']) if 'guide' not in case
            }
            if missing:
                raise serializers.ValidationError({'cases': missing})
        names = [case['name'] for case in attrs['cases']]
        if len(set(names)) != len(names):
            raise serializers.ValidationError({'cases': ['Case names must be unique.']})
        return attrs


class CompareConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)
    target = serializers.CharField()
    prior = serializers.CharField()
    compare = CompareSerializer()
    first_order = FirstOrderSerializer()
    network = NetworkSerializer()
    lbfgs = LbfgsSerializer()


class ReconstructionRefSerializer(StrictSerializer):
    method = serializers.CharField(max_length=40)
    path = serializers.CharField()


class MetricsConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)
    simulation = serializers.CharField()
    reconstructions = ReconstructionRefSerializer(many=True, allow_empty=False)
    rois = serializers.CharField(required=False)
    tumor_difference = serializers.BooleanField(default=False)
    metrics = MetricsBlockSerializer()


# ==============================================
# RESOLUTION
# ==============================================

COMMANDS = {
    # command: (serializer, RECON_DEFAULTS blocks, blocks the file must supply)
    'simulate': (SimulateConfigSerializer, ('grid', 'geometry', 'phantom', 'counts', 'metrics'), ('phantom',)),
    'reconstruct': (ReconstructConfigSerializer, ('admm', 'network', 'lbfgs', 'mlem', 'kernel'), ()),
    'denoise': (DenoiseConfigSerializer, ('denoise', 'nlm', 'network', 'lbfgs'), ()),
    'compare_optimizers': (CompareConfigSerializer, ('compare', 'first_order', 'network', 'lbfgs'), ()),
    'metrics': (MetricsConfigSerializer, ('metrics',), ()),
}


def deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def flatten_errors(detail, prefix: str = '') -> list[str]:
    """DRF error tree -> ['dotted.key: message', ...] in a stable order."""
    if isinstance(detail, dict):
        lines = []
        for key in sorted(detail, key=str):
            if key == 'non_field_errors':
                path = prefix
            else:
                path = f"{prefix}.{key}" if prefix else str(key)
            lines.extend(flatten_errors(detail[key], path))
        return lines
    if isinstance(detail, list):
        if all(isinstance(item, str) for item in detail):
            return [f"{prefix or 'config'}: {item}" for item in detail]
        lines = []
        for index, item in enumerate(detail):
            if item:
                lines.extend(flatten_errors(item, f"{prefix}.{index}" if prefix else str(index)))
        return lines
    return [f"{prefix or 'config'}: {detail}"]


def resolve_config(command: str, data: dict, seed: int = None) -> dict:
    """
    Overlay `data` on the command's defaults, apply the seed override and
    validate. Returns the resolved config as plain JSON types.
    """
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object", key='config')
    serializer_class, blocks, required = COMMANDS[command]
    defaults = {'seed': settings.RECON_DEFAULTS['seed']}
    for block in blocks:
        if block not in required or block in data:
            defaults[block] = copy.deepcopy(settings.RECON_DEFAULTS[block])
    if command == 'reconstruct':
        defaults['checkpoint_stride'] = settings.RECON_DEFAULTS['metrics']['checkpoint_stride']

    merged = deep_merge(defaults, data)
    if seed is not None:
        merged['seed'] = seed

    serializer = serializer_class(data=merged)
    if not serializer.is_valid():
        lines = flatten_errors(serializer.errors)
        raise ConfigurationError('; '.join(lines), code='config_error')
    return json.loads(json.dumps(serializer.validated_data))
