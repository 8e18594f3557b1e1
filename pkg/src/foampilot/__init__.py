"""Agent toolkit for driving FireFOAM simulation workflows: case-file
parsing and editing, code retrieval over a solver source tree, serial and
SLURM job execution, and an LLM-driven session loop with human-gated tools.
"""

from .agent import (ActionKind, AgentAction, AgentEvent, ChatSession,
                    LoopOutcome, SessionPolicy, SessionStatus, parse_action,
                    run_session)
from .case import (CaseDiff, CaseSnapshot, build_config_prompt, diff_case,
                   flatten_case, load_case)
from .config import AppConfig, ConfigError, load_config
from .foamdict import (FoamDict, FoamDims, FoamDirective, FoamList, FoamScalar,
                       ParseError, PathNotFound, get_entry, parse_dict,
                       serialize_dict, set_entry)
from .index import (CorruptIndex, VectorIndex, VersionMismatch, build_index,
                    load_index, save_index, scan_corpus, search)
from .llm import (AuthError, HashEmbedder, HttpChatProvider, HttpEmbedder,
                  MockChatProvider, MockScript, ProviderConfig, ProviderError)
from .messages import Message, Role, Transcript, estimate_tokens
from .server import FoamPilotServer
from .tools import (ApprovalChannelClosed, ApprovalMode, ApprovalPolicy,
                    ToolRegistry, ToolResult, make_standard_registry,
                    truncate_output)

__version__ = "0.1.0"

__all__ = [
    "ActionKind", "AgentAction", "AgentEvent", "ChatSession", "LoopOutcome",
    "SessionPolicy", "SessionStatus", "parse_action", "run_session",
    "CaseDiff", "CaseSnapshot", "build_config_prompt", "diff_case",
    "flatten_case", "load_case",
    "AppConfig", "ConfigError", "load_config",
    "FoamDict", "FoamDims", "FoamDirective", "FoamList", "FoamScalar",
    "ParseError", "PathNotFound", "get_entry", "parse_dict", "serialize_dict",
    "set_entry",
    "CorruptIndex", "VectorIndex", "VersionMismatch", "build_index",
    "load_index", "save_index", "scan_corpus", "search",
    "AuthError", "HashEmbedder", "HttpChatProvider", "HttpEmbedder",
    "MockChatProvider", "MockScript", "ProviderConfig", "ProviderError",
    "Message", "Role", "Transcript", "estimate_tokens",
    "FoamPilotServer",
    "ApprovalChannelClosed", "ApprovalMode", "ApprovalPolicy", "ToolRegistry",
    "ToolResult", "make_standard_registry", "truncate_output",
    "__version__",
]
