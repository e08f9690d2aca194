"""
Run configuration serializers.
Validate the types and ranges of every TOML section; unknown keys are rejected.
"""

from rest_framework import serializers

from agent.services import DOUBLE_Q, MAX_Q
from engine.services import OVERRIDE_BLACKOUT, OVERRIDE_LOSSLESS, OVERRIDE_NONE, SELECTORS
from hybrid.services import ACK_COHORT_ALL, ACK_COHORT_PLATOON
from radio.services import FADING_NONE, FADING_RAYLEIGH


# ============================================================================
# STRICT FIELDS
# ============================================================================

class StrictIntegerField(serializers.IntegerField):
    """Integer that must already be an int in the document"""

    def to_internal_value(self, data):
        if isinstance(data, bool) or not isinstance(data, int):
            raise serializers.ValidationError(f'Expected an integer, got {type(data).__name__}.')
        return super().to_internal_value(data)


class StrictFloatField(serializers.FloatField):
    """Number that must already be an int or float in the document"""

    def to_internal_value(self, data):
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise serializers.ValidationError(f'Expected a number, got {type(data).__name__}.')
        return super().to_internal_value(data)


class StrictBooleanField(serializers.BooleanField):
    """Boolean that must be true or false in the document"""

    def to_internal_value(self, data):
        if not isinstance(data, bool):
            raise serializers.ValidationError(f'Expected true or false, got {type(data).__name__}.')
        return data


class StrictCharField(serializers.CharField):
    """String that must already be a string in the document"""

    def to_internal_value(self, data):
        if not isinstance(data, str):
            raise serializers.ValidationError(f'Expected a string, got {type(data).__name__}.')
        return super().to_internal_value(data)


class StrictSerializer(serializers.Serializer):
    """Serializer that refuses keys it does not declare."""

    def to_internal_value(self, data):
        if not isinstance(data, dict):
            raise serializers.ValidationError({'non_field_errors': ['Expected a table of key/value pairs.']})
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


# ============================================================================
# SECTION SERIALIZERS
# ============================================================================

class ScenarioSerializer(StrictSerializer):
    """[scenario]"""
    highway_length = StrictFloatField(required=False)
    lanes_per_direction = StrictIntegerField(required=False)
    platoon_size = StrictIntegerField(required=False)
    platoon_spacing = StrictFloatField(required=False)
    platoon_speed = StrictFloatField(required=False)
    platoon_start = StrictFloatField(required=False)
    background_speed = StrictFloatField(required=False)
    background_count = StrictIntegerField(required=False)
    background_g5_share = StrictFloatField(required=False)
    base_station_positions = serializers.ListField(child=StrictFloatField(), required=False)
    comm_range = StrictFloatField(required=False)
    seed = StrictIntegerField(required=False, min_value=0)


class RatParamsSerializer(StrictSerializer):
    """[radio.its_g5] and [radio.lte_v2x_pc5]"""
    tx_power_dbm = StrictFloatField(required=False)
    rx_sensitivity_dbm = StrictFloatField(required=False)
    energy_detection_dbm = StrictFloatField(required=False)
    background_noise_dbm = StrictFloatField(required=False)
    center_frequency_hz = StrictFloatField(required=False)
    fading = serializers.ChoiceField(choices=[FADING_NONE, FADING_RAYLEIGH], required=False)
    collision_kappa = StrictFloatField(required=False)
    base_latency_ms = StrictFloatField(required=False)
    latency_load_scale_ms = StrictFloatField(required=False)
    capacity = StrictIntegerField(required=False)
    snir50_db = StrictFloatField(required=False)
    snir_slope_db = StrictFloatField(required=False)
    path_loss_exponent = StrictFloatField(required=False)
    reference_distance_m = StrictFloatField(required=False)
    activity_factor = StrictFloatField(required=False)
    interference_offset_db = StrictFloatField(required=False)


class RadioSerializer(StrictSerializer):
    """[radio]"""
    its_g5 = RatParamsSerializer(required=False)
    lte_v2x_pc5 = RatParamsSerializer(required=False)


class HybridSerializer(StrictSerializer):
    """[hybrid]"""
    payload_bytes = StrictIntegerField(required=False)
    ack_cohort = serializers.ChoiceField(choices=[ACK_COHORT_PLATOON, ACK_COHORT_ALL], required=False)
    ack_loss_probability = StrictFloatField(required=False)
    ack_latency_ms = StrictFloatField(required=False)


class AgentSerializer(StrictSerializer):
    """[agent]"""
    gamma = StrictFloatField(required=False)
    learning_rate = StrictFloatField(required=False)
    epsilon_start = StrictFloatField(required=False)
    epsilon_decrement = StrictFloatField(required=False)
    epsilon_min = StrictFloatField(required=False)
    batch_size = StrictIntegerField(required=False)
    buffer_capacity = StrictIntegerField(required=False)
    target_sync_period = StrictIntegerField(required=False)
    alpha = StrictFloatField(required=False)
    beta = StrictFloatField(required=False)
    duplicate_score = StrictFloatField(required=False)
    target_estimator = serializers.ChoiceField(choices=[DOUBLE_Q, MAX_Q], required=False)
    sr_target = StrictIntegerField(required=False)
    hidden_layers = serializers.ListField(child=StrictIntegerField(), required=False, allow_empty=False)
    lq_deadband_db = StrictFloatField(required=False)
    prr_window = StrictIntegerField(required=False)
    normalize_reception = StrictBooleanField(required=False)
    shared_parameters = StrictBooleanField(required=False)
    max_grad_norm = StrictFloatField(required=False, allow_null=True)


class TopsisSerializer(StrictSerializer):
    """[topsis]"""
    weights = serializers.ListField(child=StrictFloatField(), required=False)


class EngineSerializer(StrictSerializer):
    """[engine]"""
    mobility_tick_ms = StrictFloatField(required=False)
    max_rounds_factor = StrictIntegerField(required=False)
    channel_override = serializers.ChoiceField(
        choices=[OVERRIDE_NONE, OVERRIDE_LOSSLESS, OVERRIDE_BLACKOUT], required=False
    )


# ============================================================================
# RUN CONFIGURATION
# ============================================================================

class RunConfigSerializer(StrictSerializer):
    """Whole run configuration document"""
    selector = serializers.ChoiceField(choices=list(SELECTORS), required=False)
    games = StrictIntegerField(required=False, min_value=1)
    seed = StrictIntegerField(required=False, min_value=0)
    output_dir = StrictCharField(required=False)
    latency_req_ms = StrictFloatField(required=False)
    reliability_req = StrictFloatField(required=False)
    eval_games = StrictIntegerField(required=False, min_value=1)
    congestion = StrictCharField(required=False, allow_null=True)

    scenario = ScenarioSerializer(required=False)
    radio = RadioSerializer(required=False)
    hybrid = HybridSerializer(required=False)
    agent = AgentSerializer(required=False)
    topsis = TopsisSerializer(required=False)
    engine = EngineSerializer(required=False)

    def __init__(self, *args, congestion_levels=(), **kwargs):
        super().__init__(*args, **kwargs)
        self.congestion_levels = tuple(congestion_levels)

    def validate_congestion(self, value):
        if value is not None and self.congestion_levels and value not in self.congestion_levels:
            raise serializers.ValidationError(
                f"Unknown congestion level '{value}'; choose one of {', '.join(self.congestion_levels)}."
            )
        return value


def flatten_errors(errors, prefix: str = ''):
    """Turn nested serializer errors into 'dotted.key: message' lines"""
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            path = prefix if key == 'non_field_errors' else (f'{prefix}.{key}' if prefix else str(key))
            lines.extend(flatten_errors(value, path))
    elif isinstance(errors, list):
        for item in errors:
            lines.extend(flatten_errors(item, prefix))
    else:
        lines.append(f'{prefix or "config"}: {errors}')
    return lines
