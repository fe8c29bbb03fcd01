from .metrics import ConfidenceBreakdown, EvalReport, compare_models, confidence_breakdown, evaluate, topk_error
from .reports import FORMATS, emit_report, from_payload, load_report, render_csv, render_json, render_svg, to_payload
