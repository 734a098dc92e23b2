"""Regenerate src/surgkit/data/prompt_templates.tsv.

Each task gets the cross product of its question phrasings and answer phrasings.
Question slots: {surgery}, {target}. Answer slots: {keyword} (required), {explanation}.
Run from the repository root: python tools/gen_templates.py
"""

from pathlib import Path

LEADS = [
    "",
    "Looking at this {surgery} frame, ",
    "Based on the image, ",
    "In this endoscopic view of {surgery}, ",
]

TASKS = {
    "instrument_recognition": (
        [
            "what instrument is visible?",
            "which surgical tool can be seen?",
            "name the instrument in use.",
            "identify the surgical instrument.",
            "which tool is the surgeon holding?",
            "what device appears in the frame?",
            "tell me which instrument is present.",
            "what is the instrument shown here?",
        ],
        [
            "The instrument is {keyword}{explanation}.",
            "I can see {keyword}{explanation}.",
            "{keyword}{explanation}.",
            "The visible tool is {keyword}{explanation}.",
            "The surgeon is using {keyword}{explanation}.",
            "It is {keyword}{explanation}.",
            "The frame shows {keyword}{explanation}.",
            "Instrument: {keyword}{explanation}.",
            "The surgical instrument here is {keyword}{explanation}.",
            "This is {keyword}{explanation}.",
            "The tool in view is {keyword}{explanation}.",
            "The device present is {keyword}{explanation}.",
        ],
    ),
    "instrument_localization_box": (
        [
            "locate the instruments with bounding boxes.",
            "give the bounding box of each instrument.",
            "where are the instruments? Answer with [x1, y1, x2, y2] boxes.",
            "draw boxes around the surgical tools.",
            "provide pixel coordinates for every instrument.",
            "output the instrument locations as boxes.",
            "detect the instruments and report their boxes.",
            "mark each tool with a bounding box.",
        ],
        [
            "{keyword}{explanation}.",
            "The instruments are located at {keyword}{explanation}.",
            "Bounding boxes: {keyword}{explanation}.",
            "Detected: {keyword}{explanation}.",
            "Here are the boxes: {keyword}{explanation}.",
            "The tools occupy {keyword}{explanation}.",
            "Instrument locations: {keyword}{explanation}.",
            "I found {keyword}{explanation}.",
            "The boxes are {keyword}{explanation}.",
            "Located instruments: {keyword}{explanation}.",
            "Result: {keyword}{explanation}.",
            "Coordinates: {keyword}{explanation}.",
        ],
    ),
    "instrument_localization_grid": (
        [
            "where is the {target} located?",
            "in which part of the image is the {target}?",
            "which region contains the {target}?",
            "is the {target} on the left, right, top, bottom or center?",
            "what is the position of the {target}?",
            "where can the {target} be found?",
            "locate the {target} in the frame.",
            "which area of the view holds the {target}?",
        ],
        [
            "The {target} is at the {keyword}{explanation}.",
            "It is located on the {keyword}{explanation}.",
            "{keyword}{explanation}.",
            "Position: {keyword}{explanation}.",
            "The {target} appears in the {keyword}{explanation}.",
            "You can find it at the {keyword}{explanation}.",
            "It sits at the {keyword}{explanation}.",
            "The {keyword} region{explanation}.",
            "Located: {keyword}{explanation}.",
            "The tool is on the {keyword}{explanation}.",
            "Its position is {keyword}{explanation}.",
            "Look at the {keyword}{explanation}.",
        ],
    ),
    "tissue_recognition": (
        [
            "what tissue is being operated on?",
            "which anatomical structure is visible?",
            "name the tissue in focus.",
            "identify the organ or tissue in the frame.",
            "what structure is the instrument acting on?",
            "which tissue can be seen?",
            "what anatomy is shown?",
            "tell me the tissue in view.",
        ],
        [
            "The tissue is {keyword}{explanation}.",
            "I can see the {keyword}{explanation}.",
            "{keyword}{explanation}.",
            "The anatomical structure is {keyword}{explanation}.",
            "The instrument acts on the {keyword}{explanation}.",
            "It is the {keyword}{explanation}.",
            "The frame shows the {keyword}{explanation}.",
            "Tissue: {keyword}{explanation}.",
            "The structure in focus is {keyword}{explanation}.",
            "This is the {keyword}{explanation}.",
            "The organ in view is {keyword}{explanation}.",
            "Visible anatomy: {keyword}{explanation}.",
        ],
    ),
    "tissue_localization": (
        [
            "locate the tissue with a bounding box.",
            "give the bounding box of the anatomical structure.",
            "where is the tissue? Answer with [x1, y1, x2, y2].",
            "draw a box around the organ.",
            "provide pixel coordinates of the tissue.",
            "output the anatomy location as a box.",
            "detect the tissue and report its box.",
            "mark the structure with a bounding box.",
        ],
        [
            "{keyword}{explanation}.",
            "The tissue is located at {keyword}{explanation}.",
            "Bounding box: {keyword}{explanation}.",
            "Detected: {keyword}{explanation}.",
            "Here is the box: {keyword}{explanation}.",
            "The structure occupies {keyword}{explanation}.",
            "Tissue location: {keyword}{explanation}.",
            "I found {keyword}{explanation}.",
            "The box is {keyword}{explanation}.",
            "Located anatomy: {keyword}{explanation}.",
            "Result: {keyword}{explanation}.",
            "Coordinates: {keyword}{explanation}.",
        ],
    ),
    "phase_recognition": (
        [
            "what is the surgical phase?",
            "which phase of the procedure is shown?",
            "identify the current phase.",
            "what stage of the operation is this?",
            "name the phase in this image.",
            "which workflow phase is the surgeon in?",
            "what phase is being performed?",
            "tell me the current surgical phase.",
        ],
        [
            "The current phase is {keyword}{explanation}.",
            "This is the {keyword} phase{explanation}.",
            "{keyword}{explanation}.",
            "Phase: {keyword}{explanation}.",
            "The surgeon is in {keyword}{explanation}.",
            "The procedure is at {keyword}{explanation}.",
            "It shows {keyword}{explanation}.",
            "The workflow phase is {keyword}{explanation}.",
            "Currently performing {keyword}{explanation}.",
            "The stage shown is {keyword}{explanation}.",
            "We are in {keyword}{explanation}.",
            "The phase here is {keyword}{explanation}.",
        ],
    ),
    "step_recognition": (
        [
            "what is the surgical step?",
            "which step of the procedure is shown?",
            "identify the current step.",
            "what fine-grained step is this?",
            "name the step in this image.",
            "which step is the surgeon performing?",
            "what step is under way?",
            "tell me the current surgical step.",
        ],
        [
            "The current step is {keyword}{explanation}.",
            "This is the {keyword} step{explanation}.",
            "{keyword}{explanation}.",
            "Step: {keyword}{explanation}.",
            "The surgeon is performing {keyword}{explanation}.",
            "The procedure is at {keyword}{explanation}.",
            "It shows {keyword}{explanation}.",
            "The workflow step is {keyword}{explanation}.",
            "Currently doing {keyword}{explanation}.",
            "The step shown is {keyword}{explanation}.",
            "We are at {keyword}{explanation}.",
            "The step here is {keyword}{explanation}.",
        ],
    ),
    "action_recognition": (
        [
            "what action is being performed?",
            "which gesture is the surgeon making?",
            "identify the current action.",
            "what is the instrument doing?",
            "name the action in this image.",
            "which manoeuvre is under way?",
            "what motion is shown?",
            "tell me the current surgical action.",
        ],
        [
            "The current action is {keyword}{explanation}.",
            "The surgeon is {keyword}{explanation}.",
            "{keyword}{explanation}.",
            "Action: {keyword}{explanation}.",
            "The instrument is {keyword}{explanation}.",
            "The gesture is {keyword}{explanation}.",
            "It shows {keyword}{explanation}.",
            "The motion is {keyword}{explanation}.",
            "Currently {keyword}{explanation}.",
            "The action shown is {keyword}{explanation}.",
            "This is {keyword}{explanation}.",
            "The manoeuvre here is {keyword}{explanation}.",
        ],
    ),
    "triplet_recognition": (
        [
            "give the instrument, verb and target.",
            "what is the instrument-action-target triplet?",
            "describe the tool-tissue interaction as a triplet.",
            "which instrument does what to which tissue?",
            "name the instrument, its action and the target.",
            "report the activity triplet.",
            "what triplet describes this frame?",
            "state the instrument, verb and target tissue.",
        ],
        [
            "The triplet is {keyword}{explanation}.",
            "{keyword}{explanation}.",
            "Triplet: {keyword}{explanation}.",
            "Instrument, verb, target: {keyword}{explanation}.",
            "The interaction is {keyword}{explanation}.",
            "I observe {keyword}{explanation}.",
            "The activity is {keyword}{explanation}.",
            "It shows {keyword}{explanation}.",
            "Answer: {keyword}{explanation}.",
            "The frame depicts {keyword}{explanation}.",
            "Tool-tissue interaction: {keyword}{explanation}.",
            "Observed triplet: {keyword}{explanation}.",
        ],
    ),
    "cvs_assessment": (
        [
            "assess the three critical view of safety criteria.",
            "is each CVS criterion met?",
            "evaluate the critical view of safety.",
            "which CVS criteria are achieved?",
            "report criterion 1, 2 and 3 of the critical view of safety.",
            "has the critical view of safety been reached? Give each criterion.",
            "check the cystic plate, lower third and two-structure criteria.",
            "give the status of each safety criterion.",
        ],
        [
            "{keyword}{explanation}.",
            "CVS assessment: {keyword}{explanation}.",
            "The criteria are {keyword}{explanation}.",
            "Result: {keyword}{explanation}.",
            "Status: {keyword}{explanation}.",
            "My assessment is {keyword}{explanation}.",
            "Critical view of safety: {keyword}{explanation}.",
            "The evaluation gives {keyword}{explanation}.",
            "Findings: {keyword}{explanation}.",
            "Per criterion: {keyword}{explanation}.",
            "Safety check: {keyword}{explanation}.",
            "Answer: {keyword}{explanation}.",
        ],
    ),
}


def _question(lead: str, core: str) -> str:
    if not lead:
        return core[0].upper() + core[1:]
    return lead + core


def main() -> None:
    rows = ["# task\tquestion\tanswer"]
    for task, (cores, answers) in TASKS.items():
        pairs = []
        for i, core in enumerate(cores):
            for lead in LEADS:
                for j, ans in enumerate(answers):
                    # rotate answers against questions so 100-200 pairs cover all phrasings
                    if (i + j + LEADS.index(lead)) % 3 == 0:
                        pairs.append((_question(lead, core), ans))
        assert 100 <= len(pairs) <= 200, (task, len(pairs))
        rows.extend(f"{task}\t{q}\t{a}" for q, a in pairs)
    out = Path(__file__).resolve().parents[1] / "src" / "surgkit" / "data" / "prompt_templates.tsv"
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
