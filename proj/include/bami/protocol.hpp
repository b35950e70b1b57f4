#pragma once

#include <string>
#include <string_view>

#include "bami/geometry.hpp"

namespace bami {

enum class PredictionKind { box, click };

// What the caller will accept from the model text.
enum class Expect { box, click, either };

struct GroundingPrediction {
    PredictionKind kind = PredictionKind::box;
    BBox box;      // meaningful when kind == box
    Point click;   // meaningful when kind == click
    std::string raw_text;
};

enum class PromptStyle { vanilla, cot, cot_kp };

const char* prompt_style_name(PromptStyle style);
PromptStyle prompt_style_from_name(std::string_view name);

struct CorrectionAnswer {
    int choice = 1;  // 1 or 2
    std::string analysis;
    std::string reason;
};

// Extracts the first coordinate tuple matching the expectation. A
// sentinel-wrapped box ("<|box_start|>(x1, y1, x2, y2)<|box_end|>") wins over
// bare tuples; otherwise the first (x1,y1,x2,y2) / (x,y) tuple is taken.
// Throws ErrorKind::parse (raw text attached) when nothing usable is found or
// the first candidate tuple is negative/inverted.
GroundingPrediction parse_grounding_output(std::string_view raw, Expect expect);

// "(x1, y1, x2, y2)" wrapped in the standard box sentinels.
std::string format_box(const BBox& b);

// Click point -> box expanded by `expand` pixels on every side, clipped to
// the image.
BBox click_to_box(Point p, int expand, ImageDims dims);

// Deterministic instruction wrapping the query; demands the standard box
// output format. `template_text` overrides the embedded default; it must
// contain "{user_query}".
std::string build_grounding_prompt(std::string_view query, std::string_view template_text = {});

// Two-image comparison prompt for the chosen style, "{user_query}"
// substituted. Embedded text unless `template_text` overrides it.
std::string build_correction_prompt(std::string_view query, PromptStyle style,
                                    std::string_view template_text = {});

// Embedded template for a style (before substitution).
std::string correction_prompt_template(PromptStyle style);
std::string grounding_prompt_template();

// Reads the first <answer>1 or 2</answer> plus optional <analysis>/<reason>
// bodies. Throws ErrorKind::answer_unparseable when the tag is missing or its
// body is not 1/2; callers treat that as "keep candidate 1".
CorrectionAnswer parse_correction_answer(std::string_view raw);

} // namespace bami
