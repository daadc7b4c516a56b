// CodeMirror simple mode for Calc. Generated by kernelforge; do not edit.
(function (mod) {
  if (typeof exports == "object" && typeof module == "object")
    mod(require("codemirror/lib/codemirror"), require("codemirror/addon/mode/simple"));
  else if (typeof define == "function" && define.amd)
    define(["codemirror/lib/codemirror", "codemirror/addon/mode/simple"], mod);
  else
    mod(CodeMirror);
})(function (CodeMirror) {
  "use strict";

  CodeMirror.defineSimpleMode("Calc", {
    "start": [
      {regex: /\b(?:show)\b/, token: "keyword"},
      {regex: /[0-9]+/, token: "number"},
      {regex: /[a-zA-Z][a-zA-Z0-9_]*/, token: "variable"}
    ]
  });
  CodeMirror.defineMIME("text/x-calc", "Calc");
});
