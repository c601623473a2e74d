import math

from rest_framework import serializers

from matching.solvers.bcagm import ALPHA_MODES
from matching.utils.experiment_helper import METHODS

FORMAT_VERSION = 1


class PointField(serializers.ListField):
    """A 2-D point written as ``[x, y]``."""

    child = serializers.FloatField()

    def __init__(self, **kwargs):
        kwargs.setdefault('min_length', 2)
        kwargs.setdefault('max_length', 2)
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        point = super().to_internal_value(data)
        if not all(math.isfinite(value) for value in point):
            raise serializers.ValidationError("Coordinates must be finite.")
        return point


class SamplingSerializer(serializers.Serializer):
    triples_per_point = serializers.IntegerField(min_value=1, default=50)
    knn = serializers.IntegerField(min_value=1, default=300)
    min_side = serializers.FloatField(default=1e-9)
    seed = serializers.IntegerField(min_value=0, default=0)

    def validate_min_side(self, value):
        if not value > 0:
            raise serializers.ValidationError("Must be positive.")
        return value


class AffinitySerializer(serializers.Serializer):
    gamma = serializers.FloatField(allow_null=True, default=None)
    sigma_s = serializers.FloatField(default=0.5)

    def validate_gamma(self, value):
        if value is not None and not value > 0:
            raise serializers.ValidationError("Must be positive when given.")
        return value

    def validate_sigma_s(self, value):
        if not value > 0:
            raise serializers.ValidationError("Must be positive.")
        return value


class SolverSerializer(serializers.Serializer):
    method = serializers.ChoiceField(choices=METHODS, default='bcagm')
    alpha_mode = serializers.ChoiceField(choices=list(ALPHA_MODES), default='zero-then-bound')
    max_outer_iters = serializers.IntegerField(min_value=1, required=False)


class ProblemSerializer(serializers.Serializer):
    """
    Schema of the problem document.

    Only the document's shape is checked here; whether the two point sets
    form a solvable problem (|P| <= |Q|, ground truth in range) is decided
    by the caller.
    """

    format_version = serializers.IntegerField()
    template = serializers.ListField(child=PointField(), min_length=1)
    scene = serializers.ListField(child=PointField(), min_length=1)
    ground_truth = serializers.ListField(
        child=serializers.IntegerField(min_value=1), required=False, allow_null=True
    )
    sampling = SamplingSerializer(required=False)
    affinity = AffinitySerializer(required=False)
    solver = SolverSerializer(required=False)

    def validate_format_version(self, value):
        if value != FORMAT_VERSION:
            raise serializers.ValidationError(f"Unsupported format version {value}, expected {FORMAT_VERSION}.")
        return value


class AlphaPhaseSerializer(serializers.Serializer):
    index = serializers.IntegerField()
    alpha = serializers.FloatField()


class TraceSerializer(serializers.Serializer):
    stage_scores = serializers.ListField(child=serializers.FloatField())
    u_scores3 = serializers.ListField(child=serializers.FloatField())
    alpha_phases = AlphaPhaseSerializer(many=True)
    terminated = serializers.CharField()


class ResultDocumentSerializer(serializers.Serializer):
    format_version = serializers.IntegerField(default=FORMAT_VERSION)
    method = serializers.CharField()
    n1 = serializers.IntegerField()
    n2 = serializers.IntegerField()
    assignment = serializers.ListField(child=serializers.IntegerField())
    score3 = serializers.FloatField()
    score4_alpha = serializers.FloatField()
    iterations = serializers.IntegerField()
    accuracy = serializers.FloatField(required=False)
    trace = TraceSerializer()
