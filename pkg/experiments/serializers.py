from django.conf import settings
from rest_framework import serializers

TOPOLOGIES = ["ring", "random-strongly-connected"]
GAME_TYPES = ["quadratic", "cournot", "random-quadratic"]
ALGORITHMS = ["alg1", "alg2"]
STEP_MODES = ["auto", "fixed", "harmonic", "multiple"]
ENGINES = ["compact", "agents"]


class StrictSerializer(serializers.Serializer):
    """Rejects keys it does not declare, naming each of them."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError(
                    {key: ["Unknown field."] for key in unknown}
                )
        return super().to_internal_value(data)


def _bound_list(**kwargs):
    # null stands for an unbounded coordinate
    return serializers.ListField(
        child=serializers.FloatField(allow_null=True), **kwargs
    )


def _interval(**kwargs):
    return serializers.ListField(
        child=serializers.FloatField(),
        min_length=2,
        max_length=2,
        **kwargs,
    )


class GraphConfigSerializer(StrictSerializer):
    matrix = serializers.ListField(
        child=serializers.ListField(
            child=serializers.FloatField(min_value=0.0), allow_empty=False
        ),
        allow_empty=False,
        required=False,
    )
    topology = serializers.ChoiceField(choices=TOPOLOGIES, required=False)
    N = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    self_loop = serializers.FloatField(
        min_value=0.1, max_value=0.99, required=False
    )
    density = serializers.FloatField(
        min_value=0.0, max_value=1.0, default=0.3
    )

    def validate_matrix(self, value):
        if any(len(row) != len(value) for row in value):
            raise serializers.ValidationError(
                "Weight matrix must be square."
            )
        return value

    def validate(self, attrs):
        if "matrix" in attrs:
            if "topology" in attrs:
                raise serializers.ValidationError(
                    {"topology": "Give either a matrix or a topology."}
                )
            return attrs

        if "topology" not in attrs:
            raise serializers.ValidationError(
                {"matrix": "Give an explicit matrix or a topology."}
            )
        if "N" not in attrs:
            raise serializers.ValidationError(
                {"N": "Generated topologies need the agent count."}
            )
        random_topology = attrs["topology"] == "random-strongly-connected"
        if random_topology and "seed" not in attrs:
            raise serializers.ValidationError(
                {"seed": "Random topologies need an explicit seed."}
            )

        attrs.setdefault("self_loop", 0.1 if random_topology else 0.5)
        return attrs


class BoxesSerializer(StrictSerializer):
    lower = _bound_list(required=False)
    upper = _bound_list(required=False)


class CournotRangesSerializer(StrictSerializer):
    production = _interval(required=False)
    linear_cost = _interval(required=False)
    price_intercept = _interval(required=False)
    price_slope = _interval(required=False)
    capacity = _interval(required=False)

    def validate(self, attrs):
        for name, (low, high) in attrs.items():
            if low > high:
                raise serializers.ValidationError(
                    {name: "Lower end exceeds upper end."}
                )
            if name in ("production", "capacity") and low <= 0:
                raise serializers.ValidationError(
                    {name: "Range must be positive."}
                )
        return attrs


class GameConfigSerializer(StrictSerializer):
    type = serializers.ChoiceField(choices=GAME_TYPES)
    # quadratic
    G = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField()),
        required=False,
    )
    g = serializers.ListField(child=serializers.FloatField(), required=False)
    dims = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        allow_empty=False,
        required=False,
    )
    boxes = BoxesSerializer(required=False)
    # cournot
    N = serializers.IntegerField(min_value=1, required=False)
    m = serializers.IntegerField(min_value=1, required=False)
    participation = serializers.ListField(
        child=serializers.ListField(
            child=serializers.IntegerField(min_value=0)
        ),
        required=False,
    )
    n_total = serializers.IntegerField(min_value=1, required=False)
    ranges = CournotRangesSerializer(required=False)
    # random quadratic
    mu = serializers.FloatField(min_value=0.0, default=1.0)
    coupling = serializers.FloatField(min_value=0.0, default=0.5)
    seed = serializers.IntegerField(min_value=0, required=False)

    def _require(self, attrs, *names):
        missing = {
            name: f"Required for {attrs['type']} games."
            for name in names
            if name not in attrs
        }
        if missing:
            raise serializers.ValidationError(missing)

    def _check_participation(self, attrs):
        m = attrs["m"]
        problems = {}
        for agent, markets in enumerate(attrs.get("participation", [])):
            if not markets:
                problems[agent] = ["Agent serves no market."]
            elif len(set(markets)) != len(markets):
                problems[agent] = ["Market listed twice."]
            elif max(markets) >= m:
                problems[agent] = [f"Market indices must be below m={m}."]
        if problems:
            raise serializers.ValidationError({"participation": problems})

    def validate(self, attrs):
        kind = attrs["type"]

        if kind == "quadratic":
            self._require(attrs, "G", "g")
            n = len(attrs["g"])
            if len(attrs["G"]) != n or any(len(r) != n for r in attrs["G"]):
                raise serializers.ValidationError(
                    {"G": f"G must be {n}x{n} to match g."}
                )
            attrs.setdefault("dims", [1] * n)
        elif kind == "random-quadratic":
            self._require(attrs, "dims", "seed")
            n = sum(attrs["dims"])
        else:
            self._require(attrs, "N", "m", "seed")
            if (
                "participation" in attrs
                and len(attrs["participation"]) != attrs["N"]
            ):
                raise serializers.ValidationError(
                    {"participation": "Need one market list per agent."}
                )
            self._check_participation(attrs)
            return attrs

        if sum(attrs["dims"]) != n:
            raise serializers.ValidationError(
                {"dims": f"Dimensions must add up to {n}."}
            )
        for side in ("lower", "upper"):
            bounds = attrs.get("boxes", {}).get(side)
            if bounds is not None and len(bounds) != n:
                raise serializers.ValidationError(
                    {"boxes": {side: f"Need {n} bounds."}}
                )
        return attrs


class StepConfigSerializer(StrictSerializer):
    mode = serializers.ChoiceField(choices=STEP_MODES, default="auto")
    value = serializers.FloatField(min_value=0.0, required=False)
    factor = serializers.FloatField(min_value=0.0, required=False)

    def validate(self, attrs):
        if attrs["mode"] == "fixed" and "value" not in attrs:
            raise serializers.ValidationError(
                {"value": "Fixed steps need a value."}
            )
        if attrs["mode"] == "multiple" and not attrs.get("factor"):
            raise serializers.ValidationError(
                {"factor": "Step multiples need a positive factor."}
            )
        return attrs


def _positive(setting: str):
    return serializers.FloatField(
        min_value=0.0, default=lambda: getattr(settings, setting)
    )


class TolerancesSerializer(StrictSerializer):
    row_sum = _positive("NASH_ROW_SUM_TOL")
    eigen = _positive("NASH_EIGEN_TOL")
    pf = _positive("NASH_PF_TOL")
    margin = _positive("NASH_CERT_MARGIN")
    stop = _positive("NASH_STOP_TOL")
    oracle = _positive("NASH_ORACLE_TOL")

    def validate(self, attrs):
        for name, value in attrs.items():
            if value <= 0:
                raise serializers.ValidationError(
                    {name: "Tolerance must be positive."}
                )
        return attrs


class ExperimentConfigSerializer(StrictSerializer):
    graph = GraphConfigSerializer()
    game = GameConfigSerializer()
    algorithm = serializers.ChoiceField(choices=ALGORITHMS, default="alg1")
    step = StepConfigSerializer()
    tolerances = TolerancesSerializer()
    max_iters = serializers.IntegerField(
        min_value=1, default=lambda: settings.NASH_MAX_ITERS
    )
    thinning = serializers.BooleanField(default=False)
    stop_early = serializers.BooleanField(default=True)
    engine = serializers.ChoiceField(choices=ENGINES, default="compact")
    seed = serializers.IntegerField(min_value=0, required=False)
    output_dir = serializers.CharField(
        default=lambda: settings.NASH_OUTPUT_DIR
    )

    def to_internal_value(self, data):
        if isinstance(data, dict):
            data = {"step": {}, "tolerances": {}, **data}
        return super().to_internal_value(data)

    def validate(self, attrs):
        graph_agents = (
            len(attrs["graph"]["matrix"])
            if "matrix" in attrs["graph"]
            else attrs["graph"]["N"]
        )
        game = attrs["game"]
        game_agents = (
            game["N"] if game["type"] == "cournot" else len(game["dims"])
        )
        if graph_agents != game_agents:
            raise serializers.ValidationError(
                {"game": f"Game has {game_agents} agents, "
                         f"graph has {graph_agents}."}
            )
        return attrs
