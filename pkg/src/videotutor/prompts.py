"""Prompt templates for every gateway call the pipeline and orchestrator make."""

from __future__ import annotations


def summarize_prompt(topic: str, goals, transcript_text: str) -> str:
    goal_lines = "\n".join(f"- {g.name}: {g.description}" for g in goals)
    return (
        f"Here is a video transcript about {topic}. "
        "Summarize the video content that corresponds to each given learning goal.\n"
        "The transcript is not necessarily arranged in the order in which the learning goals "
        "are defined and can contain multiple segments with the same learning goal.\n"
        "The transcript may contain only some of the learning goals. Do not include a summary "
        "for learning goals that do not appear in the transcript.\n"
        "Increase the granularity: if the video author creates two different visualizations, "
        "summarize them as two points.\n\n"
        f"Learning goals:\n{goal_lines}\n\n"
        "Respond only with a list in the order of appearance in the video, without any "
        "explanations, for example:\n"
        "[\n    (\"goal name\", \"summary\"),\n    ...\n]\n\n"
        f"Transcript:\n{transcript_text}\n"
    )


def retrieve_prompt(summaries, transcript_text: str) -> str:
    summary_lines = "\n".join(
        f"{i + 1}. [{s.goal_name}] {s.summary}" for i, s in enumerate(summaries)
    )
    return (
        "For each summary point below, retrieve the sentence from the video transcript "
        "where that content begins. Copy the sentence text as close to verbatim as possible.\n"
        "Respond only with a JSON array, one object per summary point, in the same order:\n"
        '[{"category": "goal name", "sentence": "transcript sentence"}, ...]\n\n'
        f"Summary points:\n{summary_lines}\n\n"
        f"Transcript:\n{transcript_text}\n"
    )


_CONCEPT_FORMATS = (
    "Procedural knowledge: \"To achieve/understand + [specific goal/outcome] + one need to + "
    "[general actions/processes] + [additional details] + and consider/use + "
    "[relevant factors/tools].\" The [general actions/processes] should be quoted in a pair "
    "of & sign.\n\n"
    "Declarative knowledge: \"[Subject] + [verb phrase] + that + [independent clause]\".\n"
)

_PROGRAMMING_FORMATS = (
    "Procedural knowledge: \"To achieve + [specific goal] + one must + [action/verb] + "
    "[specific tool/method] + on + [object/target] + because + [reason/purpose].\"\n\n"
    "Declarative knowledge: \"The task is + [final goal] + using + [general method/tool] + "
    "and + [additional method/technique for enhancement].\"\n"
)


def knowledge_prompt(topic: str, goal_name: str, segment_text: str, code_text: str,
                     domain: str, max_items: int) -> str:
    formats = _PROGRAMMING_FORMATS if domain == "programming_related" else _CONCEPT_FORMATS
    code_part = f"\nRelated code:\n{code_text}\n" if code_text else ""
    return (
        f"The following {topic} video transcript is about a learning goal: {goal_name}. "
        "Summarize the declarative and procedural knowledge in the video transcript.\n\n"
        f"The result should be summarized in one sentence of procedural knowledge and no more "
        f"than {max_items - 1} sentences of declarative knowledge, in the order in which it "
        "should be learned.\n\n"
        f"Each piece of knowledge should follow this format:\n\n{formats}\n"
        "Sort the output knowledge according to the correct cognitive order: students first "
        "learn how to read the material, then find the facts inside it.\n\n"
        "Your response should be in a list format without any explanations:\n"
        "[\n    'knowledge_1',\n    'knowledge_2',\n    ...\n]\n\n"
        f"Transcript segment:\n{segment_text}\n"
        f"{code_part}"
    )


def conversation_system_prompt(topic: str, kernel_language: str) -> str:
    return (
        f"You are an expert in {topic}. Your task is to use the Cognitive Apprenticeship "
        f"approach to assist a student in learning {topic} through the source video tutorial.\n\n"
        "You will be provided with one or more of the following inputs:\n"
        "- knowledge: the knowledge that will be learned by the student\n"
        "- pedagogy: the specific cognitive apprenticeship move you must follow to guide "
        "students.\n"
        "- student's code or question or choice: the student's current performance, "
        "encompassing either the code in the student's notebook, the student's query, or the "
        "student's choice in the multiple-choice question.\n"
        "- other parameters or requirements: additional information or requirements you must "
        "follow to guide the student.\n\n"
        "Notes for response:\n"
        f"- Don't answer or say anything irrelevant to the topic ({topic}) or the programming "
        f"language ({kernel_language}).\n"
        "- Use natural language to communicate in the first person as a teaching assistant.\n"
        "- You must strictly follow the pedagogy to provide guidance.\n"
        f"- Tailor your advice to the programming language the student uses: {kernel_language}.\n"
        "- Don't tell the student your response is based on the transcript or code.\n"
        "- You can find the full conversation history below.\n"
    )


# Mentor-move definitions used when an expert template omits its prompt; the
# synthesized prompt is "Use [interaction] to + definition of the method".
MOVE_DEFINITIONS = {
    "Modeling": "demonstrate the task so the student can observe the expert process",
    "Coaching": "observe the student's activities along with provision of guidance and feedback",
    "Scaffolding": "support the student while they work through the task with gradual fading of such supports",
    "Articulation": "encourage the student to verbalize their knowledge and thinking",
    "Reflection": "enable the student to self-assess their own performance",
    "Exploration": "invite the student to go beyond what is contained in the source video",
}


def synthesized_prompt(interaction: str, move: str) -> str:
    definition = MOVE_DEFINITIONS.get(move, move.lower())
    return f"[Use {interaction} to {definition}]"


MCQ_FORMAT_INSTRUCTION = (
    "\n\nRespond only with a JSON object: "
    '{"question": "...", "options": ["A) ...", "B) ...", "C) ...", "D) ..."], '
    '"answer": "<letter of the correct option>"}'
)


def feedback_prompt(student_answer: str, correct: bool) -> str:
    verdict = "correct" if correct else "incorrect"
    return (
        f"The student answered: {student_answer}\n"
        f"The answer is {verdict}.\n"
        "[Use one sentence to give feedback on the student-answer]"
    )


def corrective_prompt(stderr: str, code_text: str) -> str:
    return (
        "The student's code execution failed.\n"
        f"Error output:\n{stderr}\n\n"
        f"Student's current code:\n{code_text}\n\n"
        "[Use one or two sentences to suggest how to fix the error]"
    )


def help_prompt(question: str, knowledge_text: str) -> str:
    context = f"\nCurrent knowledge being practiced: {knowledge_text}" if knowledge_text else ""
    return (
        f"The student asks: {question}{context}\n"
        "[Answer the question briefly and stay on topic]"
    )


def rubric_prompt(knowledge_text: str, student_answer: str) -> str:
    return (
        "You are grading a student's free-text explanation against the knowledge below.\n"
        f"Knowledge: {knowledge_text}\n"
        f"Student's explanation: {student_answer}\n"
        "Reply with exactly one word: CORRECT or INCORRECT."
    )


FAREWELL_MESSAGE = (
    "That's everything this video covers. Great work today — feel free to keep asking "
    "questions, or explore beyond the video on your own."
)
