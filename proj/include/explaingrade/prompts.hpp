#pragma once

#include <string_view>

// Prompt text assets. Treat these as frozen wire format: scorer caches key on
// the rendered bytes, so any edit here invalidates recorded runs. Bump the
// version when that is intended.

namespace explaingrade::prompts {

inline constexpr std::string_view kTemplateVersion = "v1";

inline constexpr std::string_view kJudgeTask =
    "Determine the correctness of the student's explanation based on a given source code, "
    "specific line number.";

// One of these three correctness definitions goes into a judge prompt.
inline constexpr std::string_view kJudgeNoDefinition =
    "Set \"Correctness\" to 1 if the student's explanation is correct and 0 if it is incorrect.";

inline constexpr std::string_view kJudgeConstruction =
    "\"Correctness\" A correct EXPLANATION explains why the line is used while implementing "
    "this program given the PROGRAM DESCRIPTION and SOURCE CODE below.";

inline constexpr std::string_view kJudgeBehavior =
    "\"Correctness\" A correct STUDENT EXPLANATION explains the code behavior using the code "
    "syntax.";

inline constexpr std::string_view kJudgeDirective =
    "ONLY set \"Correctness\". DO NOT PROVIDE REASON.";

inline constexpr std::string_view kJudgeTemplate =
    "{task}\n"
    "\n"
    "{definition}\n"
    "\n"
    "{directive}\n"
    "\n"
    "PROGRAM DESCRIPTION\n"
    "\n"
    "{program_description}\n"
    "\n"
    "SOURCE CODE\n"
    "\n"
    "{source_code}\n"
    "\n"
    "LINE NUMBER\n"
    "\n"
    "{line_number}\n"
    "\n"
    "STUDENT EXPLANATION\n"
    "\n"
    "{student_explanation}\n"
    "\n"
    "CODE\n"
    "\n"
    "{line_content}\n"
    "\n"
    "Correctness:";

// Appended once when a completion could not be parsed into a 0/1 verdict.
inline constexpr std::string_view kJudgeReprompt =
    "Respond with exactly one character: 0 or 1.";

inline constexpr std::string_view kNegativeTemplate =
    "# Task\n"
    "Generate **3 Incorrect STUDENT EXPLANATIONS** for the specified **LINE NUMBER** in the "
    "given **SOURCE CODE**.\n"
    "\n"
    "### Correctness\n"
    "\n"
    "- The **STUDENT EXPLANATION** must accurately describe the behavior of the specified line "
    "of code.\n"
    "- It should correctly reference syntax, logic, and execution details of the **SOURCE "
    "CODE**.\n"
    "\n"
    "---\n"
    "\n"
    "## Provided Information\n"
    "\n"
    "**Program Description:**\n"
    "\n"
    "{program_description}\n"
    "\n"
    "**Source Code:**\n"
    "\n"
    "{source_code}\n"
    "\n"
    "**Line Number:**\n"
    "\n"
    "{line_number}\n"
    "\n"
    "**Code:**\n"
    "\n"
    "{line_content}\n"
    "\n"
    "**Incorrect Student Explanations:**\n"
    "\n"
    "{incorrect_student_explanations}\n"
    "\n"
    "**Expert Explanation:**\n"
    "\n"
    "{expert_explanation}\n"
    "\n"
    "---\n"
    "## Output Format\n"
    "\n"
    "Return the final answer **only in valid JSON** with the following structure:\n"
    "\n"
    "{\n"
    "  \"incorrectExplanations\": [\n"
    "    \"explanation 1\",\n"
    "    \"explanation 2\",\n"
    "    \"explanation 3\"\n"
    "  ]\n"
    "}";

}  // namespace explaingrade::prompts
