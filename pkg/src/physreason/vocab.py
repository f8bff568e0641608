"""Closed vocabularies shared by the world model, the program language and the question engine."""

COLORS = ("gray", "red", "blue", "green", "brown", "cyan", "purple", "yellow")
SHAPES = ("cube", "sphere", "cylinder")
MATERIALS = ("metal", "rubber")
MASS_LEVELS = ("light", "heavy")
CHARGE_TYPES = ("neutral", "positive", "negative")

EVENT_KINDS = ("in", "out", "collision", "attraction", "repulsion")
INTERACTION_KINDS = ("collision", "attraction", "repulsion")
SCENE_KINDS = ("target", "reference", "target_future", "counterfactual", "predicted")

EDGE_LABELS = ("same", "opposite", "none")

STATIC_ATTRS = COLORS + SHAPES + MATERIALS
DYNAMIC_ATTRS = ("moving", "stationary")
ORDERS = ("first", "second", "third", "last")
ATTR_NAMES = ("color", "shape", "material")

QTYPES = ("factual", "predictive", "counterfactual_mass", "counterfactual_charge")

# Query_direction answers, counter-clockwise from +x.
DIRECTIONS = ("right", "up-right", "up", "up-left", "left", "down-left", "down", "down-right")

SHAPE_RADIUS = {"cube": 0.35, "sphere": 0.30, "cylinder": 0.30}
MASS_VALUE = {"light": 1.0, "heavy": 5.0}
CHARGE_VALUE = {"neutral": 0, "positive": 1, "negative": -1}
