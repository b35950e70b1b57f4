#include "bami/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <vector>

#include "bami/error.hpp"

namespace bami {

namespace {

constexpr std::string_view kBoxStart = "<|box_start|>";

// --- embedded prompt templates -------------------------------------------

constexpr std::string_view kGroundingPrompt =
    "You are a GUI grounding model. You are given a screenshot and an instruction.\n"
    "Locate the single UI element that best matches the instruction.\n"
    "Reply with exactly one bounding box in the standard format\n"
    "<|box_start|>(x1, y1, x2, y2)<|box_end|>, where (x1, y1) is the top-left and\n"
    "(x2, y2) the bottom-right pixel of the element in the provided image.\n"
    "\n"
    "Instruction: \"{user_query}\"";

constexpr std::string_view kCorrectionHeader =
    "You are comparing two images to determine which one better fulfills the user's intent.\n"
    "\n"
    "User Command: \"{user_query}\"\n"
    "\n"
    "Image 1: Shows a GUI element marked with a green box labeled \"1\"\n"
    "Image 2: Shows a GUI element marked with a red box labeled \"2\"\n"
    "\n"
    "Your task: Determine which image shows the element that will best fulfill the user's command.\n";

constexpr std::string_view kCorrectionAnalysisApproach =
    "\n"
    "ANALYSIS APPROACH:\n"
    "1. Examine what GUI element is highlighted in each image\n"
    "2. Consider which element better matches the user's intent\n"
    "3. Think about standard GUI patterns and user expectations\n"
    "4. Choose the image that shows the more appropriate interaction target\n";

constexpr std::string_view kCorrectionKeyPrinciples =
    "\n"
    "KEY PRINCIPLES:\n"
    "- Focus on the functional purpose of the highlighted elements\n"
    "- Consider standard UI patterns (buttons for actions, text fields for input, etc.)\n"
    "- Choose interactive elements over static text/labels\n"
    "- If one shows a selected state and the other shows normal state, prefer the normal state\n"
    "- ELEMENT QUALITY HIERARCHY (best to worst):\n"
    "   - Icon + Text together (most informative and complete)\n"
    "   - Complete icon alone (clear visual indicator)\n"
    "   - Complete text alone (readable label)\n"
    "   - Multiple elements in one box OR incomplete elements (ambiguous target)\n"
    "\n"
    "COMMON PITFALLS TO AVOID:\n"
    "    - Don't choose based on keyword matching alone\n"
    "    - Don't overlook the user's actual goal in favor of literal interpretation\n";

constexpr std::string_view kCorrectionReminder =
    "\n"
    "Remember: Provide SPECIFIC analysis based on what you actually observe, not generic descriptions.\n";

constexpr std::string_view kCorrectionOutputSimple =
    "\n"
    "**OUTPUT FORMAT**:\n"
    "<answer>1 or 2</answer>";

constexpr std::string_view kCorrectionOutputStructured =
    "\n"
    "**OUTPUT FORMAT**:\n"
    "<analysis>\n"
    "Image 1: [Describe what element is highlighted and its purpose]\n"
    "Image 2: [Describe what element is highlighted and its purpose]\n"
    "Comparison: [Explain which better serves the user's intent and why]\n"
    "</analysis>\n"
    "\n"
    "<answer>1 or 2</answer>\n"
    "<reason>Brief explanation of why this image shows the better choice</reason>";

std::string substitute_query(std::string_view template_text, std::string_view query) {
    constexpr std::string_view kPlaceholder = "{user_query}";
    const auto pos = template_text.find(kPlaceholder);
    if (pos == std::string_view::npos) {
        throw Error(ErrorKind::config, "prompt template is missing the {user_query} placeholder");
    }
    std::string out;
    out.reserve(template_text.size() + query.size());
    std::string_view rest = template_text;
    while (true) {
        const auto p = rest.find(kPlaceholder);
        if (p == std::string_view::npos) {
            out += rest;
            return out;
        }
        out += rest.substr(0, p);
        out += query;
        rest = rest.substr(p + kPlaceholder.size());
    }
}

// --- tuple scanning --------------------------------------------------------

struct Tuple {
    std::vector<long long> values;
    bool negative = false;
    std::size_t end = 0;  // index just past the closing bracket
};

// Parses "( n, n, ... )" / "[ n, n, ... ]" starting at an open bracket.
// Returns nullopt when the text at `pos` is not a well-formed numeric tuple.
std::optional<Tuple> parse_tuple_at(std::string_view raw, std::size_t pos) {
    const char open = raw[pos];
    const char close = (open == '(') ? ')' : ']';
    Tuple t;
    std::size_t i = pos + 1;
    bool expect_number = true;
    while (i < raw.size()) {
        while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t' || raw[i] == '\n' || raw[i] == '\r')) {
            ++i;
        }
        if (i >= raw.size()) return std::nullopt;
        if (expect_number) {
            bool neg = false;
            if (raw[i] == '-') {
                neg = true;
                ++i;
            }
            if (i >= raw.size() || !std::isdigit(static_cast<unsigned char>(raw[i]))) {
                return std::nullopt;
            }
            long long v = 0;
            while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) {
                v = v * 10 + (raw[i] - '0');
                if (v > 1'000'000'000LL) return std::nullopt;  // not a pixel coordinate
                ++i;
            }
            t.values.push_back(neg ? -v : v);
            t.negative = t.negative || neg;
            expect_number = false;
        } else if (raw[i] == ',') {
            ++i;
            expect_number = true;
        } else if (raw[i] == close) {
            t.end = i + 1;
            return t.values.empty() ? std::nullopt : std::optional<Tuple>(t);
        } else {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

GroundingPrediction make_box_prediction(const Tuple& t, std::string_view raw) {
    if (t.negative) {
        throw Error(ErrorKind::parse, "negative coordinates in model output", std::string(raw));
    }
    const BBox box{static_cast<int>(t.values[0]), static_cast<int>(t.values[1]),
                   static_cast<int>(t.values[2]), static_cast<int>(t.values[3])};
    if (!box.valid()) {
        throw Error(ErrorKind::parse, "inverted bounding box in model output", std::string(raw));
    }
    GroundingPrediction p;
    p.kind = PredictionKind::box;
    p.box = box;
    p.raw_text = std::string(raw);
    return p;
}

GroundingPrediction make_click_prediction(const Tuple& t, std::string_view raw) {
    if (t.negative) {
        throw Error(ErrorKind::parse, "negative coordinates in model output", std::string(raw));
    }
    GroundingPrediction p;
    p.kind = PredictionKind::click;
    p.click = Point{static_cast<int>(t.values[0]), static_cast<int>(t.values[1])};
    p.raw_text = std::string(raw);
    return p;
}

} // namespace

const char* prompt_style_name(PromptStyle style) {
    switch (style) {
        case PromptStyle::vanilla: return "vanilla";
        case PromptStyle::cot: return "cot";
        case PromptStyle::cot_kp: return "cot_kp";
    }
    return "unknown";
}

PromptStyle prompt_style_from_name(std::string_view name) {
    if (name == "vanilla") return PromptStyle::vanilla;
    if (name == "cot") return PromptStyle::cot;
    if (name == "cot_kp") return PromptStyle::cot_kp;
    throw Error(ErrorKind::config, "unknown prompt style: " + std::string(name));
}

GroundingPrediction parse_grounding_output(std::string_view raw, Expect expect) {
    if (raw.empty()) throw Error(ErrorKind::parse, "empty model output");

    const bool want_box = expect != Expect::click;
    const bool want_click = expect != Expect::box;

    // The sentinel-wrapped standard format takes priority when present.
    if (want_box) {
        const auto s = raw.find(kBoxStart);
        if (s != std::string_view::npos) {
            std::size_t i = s + kBoxStart.size();
            while (i < raw.size() && raw[i] != '(' && raw[i] != '[') ++i;
            if (i < raw.size()) {
                const auto t = parse_tuple_at(raw, i);
                if (t && t->values.size() == 4) return make_box_prediction(*t, raw);
            }
        }
    }

    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] != '(' && raw[i] != '[') continue;
        const auto t = parse_tuple_at(raw, i);
        if (!t) continue;
        if (want_box && t->values.size() == 4) return make_box_prediction(*t, raw);
        if (want_click && t->values.size() == 2) return make_click_prediction(*t, raw);
        i = t->end - 1;  // skip past tuples of the wrong arity
    }
    throw Error(ErrorKind::parse, "no parsable coordinates in model output", std::string(raw));
}

std::string format_box(const BBox& b) {
    return "<|box_start|>(" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " +
           std::to_string(b.x2) + ", " + std::to_string(b.y2) + ")<|box_end|>";
}

BBox click_to_box(Point p, int expand, ImageDims dims) {
    if (expand < 0) throw Error(ErrorKind::config, "click expansion must be >= 0");
    BBox b{p.x - expand, p.y - expand, p.x + expand, p.y + expand};
    b.x1 = std::max(b.x1, 0);
    b.y1 = std::max(b.y1, 0);
    b.x2 = std::min(b.x2, dims.width - 1);
    b.y2 = std::min(b.y2, dims.height - 1);
    return b;
}

std::string grounding_prompt_template() { return std::string(kGroundingPrompt); }

std::string correction_prompt_template(PromptStyle style) {
    std::string text(kCorrectionHeader);
    switch (style) {
        case PromptStyle::vanilla:
            text += kCorrectionOutputSimple;
            break;
        case PromptStyle::cot:
            text += kCorrectionAnalysisApproach;
            text += kCorrectionReminder;
            text += kCorrectionOutputStructured;
            break;
        case PromptStyle::cot_kp:
            text += kCorrectionAnalysisApproach;
            text += kCorrectionKeyPrinciples;
            text += kCorrectionReminder;
            text += kCorrectionOutputStructured;
            break;
    }
    return text;
}

std::string build_grounding_prompt(std::string_view query, std::string_view template_text) {
    if (query.empty()) throw Error(ErrorKind::config, "grounding query must be non-empty");
    return substitute_query(template_text.empty() ? kGroundingPrompt : template_text, query);
}

std::string build_correction_prompt(std::string_view query, PromptStyle style,
                                    std::string_view template_text) {
    if (query.empty()) throw Error(ErrorKind::config, "correction query must be non-empty");
    if (!template_text.empty()) return substitute_query(template_text, query);
    return substitute_query(correction_prompt_template(style), query);
}

namespace {

std::optional<std::string> tag_body(std::string_view raw, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    const auto s = raw.find(open);
    if (s == std::string_view::npos) return std::nullopt;
    const auto body_start = s + open.size();
    const auto e = raw.find(close, body_start);
    if (e == std::string_view::npos) return std::nullopt;
    return std::string(raw.substr(body_start, e - body_start));
}

std::string trimmed(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

} // namespace

CorrectionAnswer parse_correction_answer(std::string_view raw) {
    if (raw.empty()) throw Error(ErrorKind::answer_unparseable, "empty correction reply");
    const auto answer = tag_body(raw, "answer");
    if (!answer) {
        throw Error(ErrorKind::answer_unparseable, "no <answer> tag in correction reply",
                    std::string(raw));
    }
    const std::string body = trimmed(*answer);
    CorrectionAnswer out;
    if (body == "1") {
        out.choice = 1;
    } else if (body == "2") {
        out.choice = 2;
    } else {
        throw Error(ErrorKind::answer_unparseable,
                    "answer tag is not 1 or 2: \"" + body + "\"", std::string(raw));
    }
    if (auto a = tag_body(raw, "analysis")) out.analysis = trimmed(*a);
    if (auto r = tag_body(raw, "reason")) out.reason = trimmed(*r);
    return out;
}

} // namespace bami
