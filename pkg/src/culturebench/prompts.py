"""Prompt templates for extraction, generation, quality control, and judging.

Templates are language-keyed where the task output language matters. The
structured output markers ("Title", "Source of information:", "Question:",
"Reference Answer:", verdict tokens) are load-bearing: parsers in the rest
of the toolkit key on them, and the mock chat provider recognizes them.
"""
from __future__ import annotations

LANGUAGE_NAMES = {"en": "English", "es": "Spanish", "zh": "Chinese"}

FILTER_SYSTEM = "You screen web pages for a cultural knowledge base. Answer with a verdict token first."

FILTER_TEMPLATE = """\
Decide whether the page below is a usable source about the cultural dimension \
"{dimension}" in {culture} culture.

Answer on the first line with exactly one of:
VERDICT: RELEVANT
VERDICT: OFF_TOPIC
VERDICT: BOILERPLATE
VERDICT: WRONG_CULTURE
Then give a one-sentence rationale.

Title: {title}
URL: {url}

Page content:
===
{body}
===
"""

KNOWLEDGE_SUMMARY = {
    "en": """\
I will provide a web article. Please extract the key characteristics and content \
related to the cultural dimension "{dimension}" in {culture} culture from it. \
Present these features clearly under distinct headings.

Each feature should begin with a section titled:

Title:

Then list the following points below:

Description of the feature:

Source of information: (Quote the original text and indicate the paragraph if possible.)

The content should be well-structured and logically coherent.
If the information is insufficient to support a certain feature, do not fabricate content.

The article is as follows:

===

{text}

===
""",
    "es": """\
Eres un investigador especializado en la cultura {culture}. Se te proporcionará \
un texto de una página web (puede estar en cualquier idioma).

Tu tarea es identificar las características culturales que estén relacionadas con \
el siguiente aspecto específico:

Dimensión cultural: **{dimension}**

Por favor, extrae del texto solo los elementos relevantes que estén claramente \
relacionados con esta dimensión cultural.

Escribe las características en español, siguiendo este formato:

Título: [Título breve de la característica]

Descripción: [Descripción clara y concisa en español]

Fuente de información: [Frase, palabra clave o idea tomada directamente del texto original]

Escribe siempre en español.

Texto de la página web:

\"\"\"

{text}

\"\"\"
""",
}

VERIFY_SYSTEM = "You check extracted statements against their source page. Answer with a verdict token first."

VERIFY_TEMPLATE = """\
Statement extracted for the cultural dimension "{dimension}":
{statement}

Quoted source span:
{quote}

Source page text:
===
{body}
===

Is the statement entailed by the source page, and does the quote support it?
Answer on the first line with exactly one of:
VERDICT: ENTAILED
VERDICT: NOT_ENTAILED
VERDICT: WRONG_DIMENSION
Then give a one-sentence rationale.
"""

QUESTION_INSTRUCTIONS = {
    "FACTUAL": (
        "Based on the context, think through all relevant cultural points step by step "
        "and generate a factual question. Ensure that the question stem is clear, the "
        "options are plausible but misleading (distractors), and the answer is accurate."
    ),
    "CONCEPTUAL": (
        "Based on the context, think through all relevant cultural points step by step "
        "and generate a conceptual explanation question. The question should focus on the "
        "learner's understanding of the concepts, structures, or values behind cultural "
        "phenomena, rather than simple memorization. Ensure the question is "
        "thought-provoking and the answer is well-justified."
    ),
    "MISLEADING": (
        "Based on the context, think through all relevant cultural points step by step "
        "and generate a misleading question to assess whether learners can identify "
        "cultural misunderstandings, stereotypes, or biases. The question should focus on "
        "learners' critical thinking about culture, identifying which statements or "
        "behaviors reflect misunderstandings, oversimplifications, biases, or stereotypes, "
        "and guide them toward more accurate or respectful understandings."
    ),
    "MULTI_HOP": (
        "Based on the context, think through all relevant cultural points step by step "
        "and generate a multi-hop reasoning question to assess whether the learner can "
        "synthesize multiple cultural elements and understand the deeper logic or internal "
        "connections among cultural phenomena. The question should prompt learners to "
        "start from multiple information points, integrate cultural knowledge, and perform "
        "logical analysis, comparison, or generalization."
    ),
}

FORMAT_DIRECTIVES = {
    "MULTIPLE_CHOICE": "Write a multiple-choice question with exactly four options labeled A) to D).",
    "TRUE_FALSE": "Write a true/false question; the reference answer must be True or False.",
    "SHORT_ANSWER": "Write a short-answer question (a fill-in-the-blank stem is acceptable).",
    "ESSAY": "Write an essay question requiring a few sentences of discussion.",
}

GENERATION_TEMPLATE = """\
Task: Answer in {language_name}.
{instruction}
{format_directive}

Note:

1. The question should avoid explicitly mentioning cultural concepts, terminology, \
or characteristics, in order to effectively assess the student's understanding of \
cultural traits.

2. A reference answer should be provided after the question.

Context:

'''
{context}
'''

Question:

Reference Answer:
"""

GENERATION_RETRY_REMINDER = (
    "\nReminder: output exactly one 'Question:' section and one 'Reference Answer:' "
    "section, nothing else."
)

QC_SYSTEM = "You audit generated evaluation items for logical consistency. Answer with a verdict token first."

QC_TEMPLATE = """\
Check the logical consistency among the question, the provided answer, and the \
underlying reference cultural knowledge: whether the question is answerable from \
the knowledge, whether the answer follows from the question, and whether any \
contradictions or reasoning errors arise across the three components.

Question:
{question}

Provided answer:
{answer}

Reference knowledge:
{knowledge}

Answer on the first line with exactly one of:
VERDICT: VERIFIED
VERDICT: REJECTED(UNANSWERABLE)
VERDICT: REJECTED(WRONG_ANSWER)
VERDICT: REJECTED(CONTRADICTION)
VERDICT: REJECTED(LEAKS_CONCEPT)
Then give a one-sentence rationale.
"""

JUDGE_SYSTEM = "You are a strict grading judge for cultural questions. Answer with a verdict token first."

JUDGE_TEMPLATE = """\
Compare the reference answer with the model-generated answer and determine whether \
the content of the latter conflicts with the cultural knowledge in the reference. \
If a conflict exists, the answer is incorrect. If there is no conflict and the key \
content aligns, the answer is correct.

Question:
{question}

Reference answer:
{reference_answer}

Model answer:
{test_answer}

Answer on the first line with exactly one of:
VERDICT: CORRECT
VERDICT: INCORRECT
Then give a one-sentence rationale.
"""

INJECTION_TEMPLATE = """\
Reference:
{references}

Question:
{question}
"""

ANSWER_INSTRUCTIONS = {
    "MULTIPLE_CHOICE": "Answer with the letter of the correct option.",
    "TRUE_FALSE": "Answer with True or False.",
    "SHORT_ANSWER": "Answer briefly in one or two sentences.",
    "ESSAY": "Answer in a short paragraph.",
}

CLUSTER_LABEL_TEMPLATE = """\
Summarize the shared theme of the following cultural statements in at most 6 words. \
Reply with the label only.

{statements}
"""


def knowledge_summary_prompt(language: str, dimension: str, culture: str, text: str) -> str:
    template = KNOWLEDGE_SUMMARY.get(language, KNOWLEDGE_SUMMARY["en"])
    return template.format(dimension=dimension, culture=culture, text=text)


def generation_prompt(
    content_type: str,
    format_name: str,
    language: str,
    context: str,
    retry: bool = False,
) -> str:
    prompt = GENERATION_TEMPLATE.format(
        language_name=LANGUAGE_NAMES.get(language, language),
        instruction=QUESTION_INSTRUCTIONS[content_type],
        format_directive=FORMAT_DIRECTIVES[format_name],
        context=context,
    )
    if retry:
        prompt += GENERATION_RETRY_REMINDER
    return prompt
