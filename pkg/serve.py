from typing import Dict, List

from flask import Flask, jsonify, request

from emitters import ExchangeError, emit_dot, load_exchange_document
from gsn import Diagnostic, has_errors, validate_graph
from pattern import PatternLibrary, PatternParseError, builtin_library, parse_pattern, validate_pattern

app = Flask(__name__)


def diagnostic_json(d: Diagnostic) -> Dict[str, str]:
    return {
        "severity": d.severity.value,
        "code": d.code,
        "message": d.message,
        "locus": d.locus,
    }


class ValidationService(object):
    def __init__(self, library: PatternLibrary = None):
        self.library = library if library is not None else builtin_library()

    def patterns(self) -> List[Dict]:
        result = []
        for name in self.library.names():
            p = self.library.get(name)
            result.append({
                "name": p.name,
                "version": p.version,
                "objective": p.objective.value,
                "hot_spots": [{
                    "name": h.name,
                    "sort": h.sort.value,
                    "collection": h.collection,
                    "required": h.required,
                } for h in p.params],
            })
        return result

    def lint(self, source: bytes) -> Dict:
        try:
            p = parse_pattern(source)
        except PatternParseError as exc:
            return {
                "ok": False,
                "parse_errors": [{"line": d.line, "column": d.column, "message": d.message}
                                 for d in exc.diagnostics],
                "diagnostics": [],
            }
        diagnostics = validate_pattern(p)
        return {
            "ok": not has_errors(diagnostics),
            "pattern": p.name,
            "parse_errors": [],
            "diagnostics": [diagnostic_json(d) for d in diagnostics],
        }

    def validate(self, document: bytes) -> Dict:
        try:
            doc = load_exchange_document(document)
        except ExchangeError as exc:
            return {"ok": False, "diagnostics": [diagnostic_json(d) for d in exc.diagnostics]}
        diagnostics = validate_graph(doc.graph)
        return {
            "ok": True,
            "system_name": doc.system_name,
            "nodes": len(doc.graph.node_map()),
            "edges": len(set(doc.graph.edges)),
            "diagnostics": [diagnostic_json(d) for d in diagnostics],
        }


service = ValidationService()


@app.route('/patterns', methods=['GET'])
def list_patterns():
    return jsonify(service.patterns())


@app.route('/patterns/lint', methods=['POST'])
def lint_pattern():
    result = service.lint(request.get_data())
    return jsonify(result), 200 if result["ok"] else 422


@app.route('/validate', methods=['POST'])
def validate_document():
    result = service.validate(request.get_data())
    return jsonify(result), 200 if result["ok"] else 422


@app.route('/render/dot', methods=['POST'])
def render_dot():
    try:
        doc = load_exchange_document(request.get_data())
    except ExchangeError as exc:
        return jsonify({"ok": False, "diagnostics": [diagnostic_json(d) for d in exc.diagnostics]}), 422
    return emit_dot(doc.graph), 200, {"Content-Type": "text/vnd.graphviz; charset=utf-8"}


if __name__ == "__main__":
    app.run()
