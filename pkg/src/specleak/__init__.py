"""Policies that satisfy a hidden task while keeping an observer unsure which task it is."""

from .automata import Dfa, ProductMdp, add_terminal, build_dfa, product, spec_automaton
from .evaluation import EntropyReport, adversary_report, exact_satisfaction, simulate
from .model import ExpandedMdp, Mdp, ModelError, expand, load_model
from .optcore import InfeasibleSpecification, SearchSettings, SolverInconclusive, SynthesisProgram, bisect
from .policy import Policy, SynthesisResult, extract_policy, load_policy
from .speclang import ProblemInstance, SpecFormula, SpecSyntaxError, classify, evaluate, load_instance, parse_spec
from .synth_approx import synthesize_approx
from .synth_exact import synthesize_exact

__all__ = [
    "Dfa", "EntropyReport", "ExpandedMdp", "InfeasibleSpecification", "Mdp", "ModelError", "Policy",
    "ProblemInstance", "ProductMdp", "SearchSettings", "SolverInconclusive", "SpecFormula", "SpecSyntaxError",
    "SynthesisProgram", "SynthesisResult", "add_terminal", "adversary_report", "bisect", "build_dfa", "classify",
    "evaluate", "exact_satisfaction", "expand", "extract_policy", "load_instance", "load_model", "load_policy",
    "parse_spec", "product", "simulate", "spec_automaton", "synthesize_approx", "synthesize_exact",
]
