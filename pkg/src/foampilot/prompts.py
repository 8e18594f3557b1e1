"""Prompt templates for the agent: system prompt and the three task prompts.

The templates are fixed text with named placeholders; rendering is plain
substitution so the exact wording stays auditable in one place.
"""

from __future__ import annotations

import re

SYSTEM_PROMPT_TEMPLATE = """\
You are an assistant whose job is to help fire scientists navigate and summarize the source code, modify the simulation case configuration files, and run simulation jobs.
Respond to the human scientist as helpfully and accurately as possible.
You have access to the following tools: {tool_names}.
Use a JSON blob to specify a tool by providing an action key (tool name) and an action_input key (tool input).
Valid "action" values: "Final Answer" or {tool_names}.
Provide only ONE action per $JSON_BLOB, as shown:

```
{{
"action": $TOOL_NAME,
"action_input": $INPUT
}}
```

Follow this format:
Question: input question to answer
Thought: consider previous and subsequent steps
while requests is not finished, do
    Action:
    ```
    $JSON_BLOB
    ```
    Observation: action result
end

After the problem is solved, give a final thought to summarize.
"""

CASE_CONFIG_TEMPLATE = """\
I have a FireFOAM simulation case located at {case_path}.
{user_request}
Always read the contents of a file before modifying it.
I have compressed the entire case directory, including the README file, into a single long string for you to view and understand my request, as follows:
{case_contents}"""

SERIAL_JOB_TEMPLATE = (
    "I have a FireFOAM simulation case located at {case_path}. "
    "Take a look at the case directory. Mesh the case using the provided script, "
    "and then run the simulation in serial on the command line by invoking fireFoam. "
    "Write the output to a log file. After the simulation is finished, plot the "
    "results of volumetric heat release rate and save them in the case directory. "
    "Remember to load environment variables from {OF_bashrc_path}."
)

HPC_JOB_TEMPLATE = (
    "I have a FireFOAM simulation case located at {case_path}. "
    "Determine what SLURM queues you have access to. "
    "Mesh the case using the provided script. "
    "Based on the mesh size and the resources you have available, choose how many nodes to use. "
    "Use all physical cores on each node you use. "
    "Configure the number of subdomains in the case based on the number of physical cores "
    "and decompose the domain. "
    "Prepare a SLURM script for the queue and core count, then submit the job. "
    "Remember to always load environment variables from {OF_bashrc_path} before any FOAM "
    "command, both in the command line and in the SLURM script. "
    "Always read the contents of a file before modifying it. "
    "I have compressed the entire case directory, including the README file, into a single "
    "long string for you to view and understand my request, as follows: {case_contents}"
)

TEMPLATES = {
    "CaseConfig": CASE_CONFIG_TEMPLATE,
    "SerialJob": SERIAL_JOB_TEMPLATE,
    "HpcJob": HPC_JOB_TEMPLATE,
}

SUMMARIZE_INSTRUCTION = (
    "Summarize the progress of the following agent session for the user: what was "
    "attempted, what succeeded or failed, and what remains to be done. Be concise."
)

MALFORMED_ACTION_OBSERVATION = (
    "Invalid action format. Respond with one JSON blob containing keys "
    "action and action_input."
)

_PLACEHOLDER_RE = re.compile(r"(?<!\{)\{([a-zA-Z_][a-zA-Z0-9_]*)\}(?!\})")


class EmptyToolList(ValueError):
    pass


class MissingBinding(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing binding for placeholder {{{self.name}}}"


def render_system_prompt(tool_names: list[str]) -> str:
    """Render the agent system prompt with the registered tool names.

    The names are joined with ", " and substituted in both template slots;
    literal double braces collapse to single braces in the output.
    """
    if not tool_names:
        raise EmptyToolList("tool_names must be non-empty")
    joined = ", ".join(tool_names)
    text = SYSTEM_PROMPT_TEMPLATE.replace("{tool_names}", joined)
    return text.replace("{{", "{").replace("}}", "}")


def render_prompt_template(template_id: str, bindings: dict[str, str]) -> str:
    """Substitute ``bindings`` into the named task template.

    Raises MissingBinding if any placeholder of the template is not bound;
    no unresolved ``{name}`` placeholder remains in the output.
    """
    try:
        template = TEMPLATES[template_id]
    except KeyError:
        raise KeyError(f"unknown template: {template_id!r}") from None

    def _sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in bindings:
            raise MissingBinding(name)
        return bindings[name]

    return _PLACEHOLDER_RE.sub(_sub, template)
