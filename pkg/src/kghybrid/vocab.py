"""Closed vocabularies shared by the game, the grammar and the feature library."""

ACTION_TYPES = ("go", "take", "cut", "cook", "prepare", "eat")
K = len(ACTION_TYPES)

PLAYER = "player"
COOKBOOK = "cookbook"
KNIFE = "knife"
MEAL = "meal"
SHARP = "sharp"

DIRECTIONS = ("east", "west", "north", "south")
DIRECTION_RELATION = {d: f"{d}_of" for d in DIRECTIONS}
OPPOSITE = {"east": "west", "west": "east", "north": "south", "south": "north"}
# grid offsets: (A, east_of, B) means A lies one step east of B
OFFSETS = {"east": (1, 0), "west": (-1, 0), "north": (0, 1), "south": (0, -1)}

CUT_VERBS = ("slice", "dice", "chop")
CUT_FORM = {"slice": "sliced", "dice": "diced", "chop": "chopped"}
APPLIANCES = ("stove", "oven", "bbq")
COOK_FORM = {"stove": "fried", "oven": "roasted", "bbq": "grilled"}

UNCUT = "uncut"
RAW = "raw"
STATUSES = ("uncut", "sliced", "diced", "chopped", "raw", "fried", "roasted", "grilled")
CUT_STATUSES = tuple(CUT_FORM.values())
COOK_STATUSES = tuple(COOK_FORM.values())

RELATIONS = ("at", "in", "is", "needs", "part_of") + tuple(DIRECTION_RELATION.values())

# Non-entity node tokens: never renamed between environments.
CLOSED_NODES = STATUSES + (PLAYER, COOKBOOK, KNIFE, MEAL, SHARP) + APPLIANCES
CLOSED_TOKENS = frozenset(CLOSED_NODES) | frozenset(RELATIONS)

INGREDIENTS = (
    "apple", "banana", "beef", "broccoli", "cabbage", "carrot", "celery", "cheese",
    "chicken", "corn", "cucumber", "egg", "eggplant", "garlic", "leek", "lemon",
    "lettuce", "lime", "mango", "mushroom", "olive", "onion", "orange", "peach",
    "pear", "pepper", "plum", "pork", "potato", "pumpkin", "radish", "salmon",
    "shrimp", "squash", "tofu", "tomato", "tuna", "turnip", "yam", "zucchini",
)

ROOMS = (
    "kitchen", "pantry", "livingroom", "bedroom", "bathroom", "corridor",
    "backyard", "garden", "shed", "driveway", "street", "supermarket",
)

CONTAINERS = (
    "fridge", "counter", "table", "shelf", "cupboard", "sofa", "bed", "toolbox",
    "workbench", "crate", "basket", "chest", "dresser", "cabinet", "stand",
    "rack", "bin", "trunk", "locker", "desk",
)
