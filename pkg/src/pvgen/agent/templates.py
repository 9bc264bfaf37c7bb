"""Instruction templates sent to the prompting agent, and fixed fallback texts."""

IMAGINE_MARKER = "You are an intelligent scene generator."
COT_MARKER = "First stage (identify)"

IMAGINE_TEMPLATE = (
    "You are an intelligent scene generator. Imagine you are flying through a scene, "
    "based on the entities in the current scene, you need to imagine possible entities "
    "with common and significant visible motion in the scene. You need to generate a "
    "suitable scene name and description for the {k} main entities in the scene. The "
    "entities within the scenes are adapted to match and fit with the scenes, and you "
    "should put entities with larger visual significance and motion possibility first.\n"
    "Current entities: {current}\n"
    "Reply with a single line of the form "
    "'SceneName: entity doing something, entity doing something, ..., and entity doing something.'"
)

COT_TEMPLATE = (
    "First stage (identify): You should check the objects in the list of possible "
    "dynamic objects one by one to verify if they exist in the given image. If there is "
    "no object in the list identified in the given image, then you need to identify some "
    "by yourself.\n"
    "Second stage (describe): For each identified object, provide a concise description "
    "of the Visual Significance (i.e. the proportion in given image), Motion Possibility "
    "(i.e. possibility of containing strong motion in the next few seconds), and what "
    "motion it/they may have in the image.\n"
    "Third stage (write prompt): Based on the descriptions from the previous stage, write "
    "the final dynamical description for the scene, first describe those objects with "
    "strong visual significance and motion possibility.\n"
    "Scene: {scene_name}\n"
    "Possible dynamic objects: {description}\n"
    "Reply in the form 'Think Log': '<your reasoning for all three stages>', "
    "'Dynamical Description': '<final prompt>'"
)

# text prompt used while sampling camera transitions
FLYOVER_PROMPT = "a camera flyover, cruising steadily across the scene"

# dynamics prompt used when no agent is configured
DEFAULT_DYNAMICS_PROMPT = "The video is of high quality, high dynamic, and the view is very clear..."

NO_CURRENT_ENTITIES = "(none identified)"


def imagine_instruction(current_entities, k: int) -> str:
    current = ", ".join(current_entities) if current_entities else NO_CURRENT_ENTITIES
    return IMAGINE_TEMPLATE.format(k=k, current=current)


def cot_instruction(scene_name: str, description: str) -> str:
    return COT_TEMPLATE.format(scene_name=scene_name, description=description)
