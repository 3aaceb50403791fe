#pragma once

// Structured rollout grammar: the <think>/<answer> envelope and the
// key-value answer payload carrying boxes, keypoints and affordance labels.

#include <affgr/error.hpp>

#include <array>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace affgr {

struct Point2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
};

/// Continuous rectangle [x1,x2] x [y1,y2] in pixel units.
struct Box2D {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 < x2 && y1 < y2; }
  bool contains(const Point2D& p) const { return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2; }

  friend bool operator==(const Box2D&, const Box2D&) = default;
};

struct RawRollout {
  std::string text;
  int image_width = 0;
  int image_height = 0;
};

struct ThinkAnswerPair {
  std::string think_text;
  std::string answer_text;
};

/// Parsed answer payload. `boxes` holds one entry for the `bbox` key and
/// one or more for the `bboxes` extension; `keypoints[0]` is the primary
/// point and the rest come from `aux_points`.
struct StructuredAnswer {
  std::vector<Box2D> boxes;
  std::vector<Point2D> keypoints;
  std::string aff_method;
  std::string aff_part;

  const Box2D& bbox() const { return boxes.front(); }

  friend bool operator==(const StructuredAnswer&, const StructuredAnswer&) = default;
};

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline bool all_space(std::string_view s) { return trim(s).empty(); }

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

enum class Tag { ThinkOpen, ThinkClose, AnswerOpen, AnswerClose };

struct TagHit {
  Tag tag;
  std::size_t begin;
  std::size_t end;
};

inline std::vector<TagHit> scan_tags(std::string_view text) {
  static constexpr std::array<std::pair<std::string_view, Tag>, 4> kTags{{
      {"<think>", Tag::ThinkOpen},
      {"</think>", Tag::ThinkClose},
      {"<answer>", Tag::AnswerOpen},
      {"</answer>", Tag::AnswerClose},
  }};
  std::vector<TagHit> hits;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '<') continue;
    for (const auto& [literal, tag] : kTags) {
      if (text.substr(i, literal.size()) == literal) {
        hits.push_back({tag, i, i + literal.size()});
        i += literal.size() - 1;
        break;
      }
    }
  }
  return hits;
}

// Strict decimal: -?digits(.digits)?
inline double parse_number(std::string_view token) {
  std::string_view t = trim(token);
  std::size_t i = 0;
  if (i < t.size() && t[i] == '-') ++i;
  std::size_t int_digits = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i, ++int_digits;
  bool ok = int_digits > 0;
  if (ok && i < t.size() && t[i] == '.') {
    ++i;
    std::size_t frac_digits = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i, ++frac_digits;
    ok = frac_digits > 0;
  }
  if (!ok || i != t.size()) {
    throw Error(ErrorCode::MalformedNumber, "not a number: '" + std::string(t) + "'");
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorCode::MalformedNumber, "not representable: '" + std::string(t) + "'");
  }
  return value;
}

// Splits the inside of a bracketed list on top-level commas.
inline std::vector<std::string_view> split_list(std::string_view bracketed) {
  std::string_view t = trim(bracketed);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']') {
    throw Error(ErrorCode::MalformedAnswer, "expected a bracketed list: '" + std::string(t) + "'");
  }
  t = t.substr(1, t.size() - 2);
  std::vector<std::string_view> items;
  if (all_space(t)) return items;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '[') ++depth;
    else if (t[i] == ']') --depth;
    else if (t[i] == ',' && depth == 0) {
      items.push_back(trim(t.substr(start, i - start)));
      start = i + 1;
    }
    if (depth < 0) throw Error(ErrorCode::MalformedAnswer, "unbalanced brackets");
  }
  if (depth != 0) throw Error(ErrorCode::MalformedAnswer, "unbalanced brackets");
  items.push_back(trim(t.substr(start)));
  return items;
}

inline std::vector<double> parse_numbers(std::string_view bracketed, std::size_t arity,
                                         std::string_view key) {
  auto items = split_list(bracketed);
  if (items.size() != arity) {
    throw Error(ErrorCode::MalformedNumber, std::string(key) + " expects " +
                                                std::to_string(arity) + " numbers");
  }
  std::vector<double> out;
  out.reserve(arity);
  for (auto item : items) out.push_back(parse_number(item));
  return out;
}

inline Box2D parse_box(std::string_view bracketed, std::string_view key) {
  auto v = parse_numbers(bracketed, 4, key);
  return {v[0], v[1], v[2], v[3]};
}

inline Point2D parse_point(std::string_view bracketed, std::string_view key) {
  auto v = parse_numbers(bracketed, 2, key);
  return {v[0], v[1]};
}

inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed);
  if (ec != std::errc()) throw Error(ErrorCode::InvalidArgument, "number too large to format");
  return std::string(buf.data(), ptr);
}

inline void check_bounds(const StructuredAnswer& a, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
  }
  const double w = width;
  const double h = height;
  for (const auto& b : a.boxes) {
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > w || b.y2 > h || b.x1 > w || b.y1 > h || b.x2 < 0 ||
        b.y2 < 0) {
      throw Error(ErrorCode::OutOfBounds, "bbox outside image");
    }
    if (!b.valid()) throw Error(ErrorCode::InvalidBox, "bbox requires x1 < x2 and y1 < y2");
  }
  for (const auto& p : a.keypoints) {
    if (p.x < 0 || p.y < 0 || p.x > w || p.y > h) {
      throw Error(ErrorCode::OutOfBounds, "keypoint outside image");
    }
  }
}

}  // namespace detail

/// Splits a rollout into its reasoning and answer blocks. Only whitespace
/// may appear outside the two blocks, and neither block may contain any of
/// the four tags.
inline ThinkAnswerPair parse_think_answer(std::string_view text) {
  using detail::Tag;
  const auto hits = detail::scan_tags(text);
  const bool shape_ok = hits.size() == 4 && hits[0].tag == Tag::ThinkOpen &&
                        hits[1].tag == Tag::ThinkClose && hits[2].tag == Tag::AnswerOpen &&
                        hits[3].tag == Tag::AnswerClose;
  if (!shape_ok) {
    throw Error(ErrorCode::MalformedTags, "expected exactly <think>...</think><answer>...</answer>");
  }
  if (!detail::all_space(text.substr(0, hits[0].begin)) ||
      !detail::all_space(text.substr(hits[1].end, hits[2].begin - hits[1].end)) ||
      !detail::all_space(text.substr(hits[3].end))) {
    throw Error(ErrorCode::MalformedTags, "text outside the think/answer blocks");
  }
  return {std::string(text.substr(hits[0].end, hits[1].begin - hits[0].end)),
          std::string(text.substr(hits[2].end, hits[3].begin - hits[2].end))};
}

inline ThinkAnswerPair parse_think_answer(const RawRollout& raw) {
  return parse_think_answer(raw.text);
}

/// Parses `{bbox:[x1,y1,x2,y2], point:[x,y], aff_methods: m, aff_parts: p}`.
/// Optional extensions: `aux_points:[[x,y],...]` and `bboxes:[[...],...]`
/// (mutually exclusive with `bbox`).
inline StructuredAnswer parse_structured_answer(std::string_view answer_text, int image_width,
                                                int image_height) {
  std::string_view t = detail::trim(answer_text);
  if (t.size() < 2 || t.front() != '{' || t.back() != '}') {
    throw Error(ErrorCode::MalformedAnswer, "answer must be enclosed in braces");
  }
  t = t.substr(1, t.size() - 2);

  std::optional<std::vector<Box2D>> boxes;
  std::optional<Point2D> point;
  std::vector<Point2D> aux;
  std::optional<std::string> method;
  std::optional<std::string> part;
  bool seen_bbox = false, seen_bboxes = false, seen_aux = false;

  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < t.size() && detail::is_space(t[i])) ++i;
  };
  skip_ws();
  while (i < t.size()) {
    const std::size_t key_begin = i;
    while (i < t.size() && (std::isalnum(static_cast<unsigned char>(t[i])) || t[i] == '_')) ++i;
    const std::string_view key = t.substr(key_begin, i - key_begin);
    if (key.empty()) throw Error(ErrorCode::MalformedAnswer, "expected a key");
    skip_ws();
    if (i >= t.size() || t[i] != ':') {
      throw Error(ErrorCode::MalformedAnswer, "expected ':' after key '" + std::string(key) + "'");
    }
    ++i;
    skip_ws();

    const bool known = key == "bbox" || key == "bboxes" || key == "point" ||
                       key == "aux_points" || key == "aff_methods" || key == "aff_parts";
    if (!known) throw Error(ErrorCode::UnknownKey, std::string(key));

    const std::size_t value_begin = i;
    int brackets = 0, parens = 0;
    for (; i < t.size(); ++i) {
      const char c = t[i];
      if (c == '[') ++brackets;
      else if (c == ']') --brackets;
      else if (c == '(') ++parens;
      else if (c == ')') --parens;
      else if (c == ',' && brackets == 0 && parens == 0) break;
      if (brackets < 0 || parens < 0) {
        throw Error(ErrorCode::MalformedAnswer, "unbalanced value for '" + std::string(key) + "'");
      }
    }
    if (brackets != 0 || parens != 0) {
      throw Error(ErrorCode::MalformedAnswer, "unbalanced value for '" + std::string(key) + "'");
    }
    const std::string_view value = detail::trim(t.substr(value_begin, i - value_begin));
    if (i < t.size()) ++i;  // consume ','
    skip_ws();

    auto duplicate = [&] { throw Error(ErrorCode::DuplicateKey, std::string(key)); };
    if (key == "bbox") {
      if (seen_bbox) duplicate();
      seen_bbox = true;
      boxes = std::vector<Box2D>{detail::parse_box(value, key)};
    } else if (key == "bboxes") {
      if (seen_bboxes) duplicate();
      seen_bboxes = true;
      std::vector<Box2D> list;
      for (auto item : detail::split_list(value)) list.push_back(detail::parse_box(item, key));
      if (list.empty()) throw Error(ErrorCode::MalformedAnswer, "bboxes is empty");
      boxes = std::move(list);
    } else if (key == "point") {
      if (point) duplicate();
      point = detail::parse_point(value, key);
    } else if (key == "aux_points") {
      if (seen_aux) duplicate();
      seen_aux = true;
      for (auto item : detail::split_list(value)) aux.push_back(detail::parse_point(item, key));
    } else {
      auto& slot = key == "aff_methods" ? method : part;
      if (slot) duplicate();
      if (value.empty() || value.find_first_of("[]{}") != std::string_view::npos) {
        throw Error(ErrorCode::MalformedAnswer, "bad token for '" + std::string(key) + "'");
      }
      slot = std::string(value);
    }
  }
  if (seen_bbox && seen_bboxes) {
    throw Error(ErrorCode::DuplicateKey, "bbox and bboxes are mutually exclusive");
  }
  if (!boxes) throw Error(ErrorCode::MissingKey, "bbox");
  if (!point) throw Error(ErrorCode::MissingKey, "point");
  if (!method) throw Error(ErrorCode::MissingKey, "aff_methods");
  if (!part) throw Error(ErrorCode::MissingKey, "aff_parts");

  StructuredAnswer out;
  out.boxes = std::move(*boxes);
  out.keypoints.push_back(*point);
  out.keypoints.insert(out.keypoints.end(), aux.begin(), aux.end());
  out.aff_method = std::move(*method);
  out.aff_part = std::move(*part);
  detail::check_bounds(out, image_width, image_height);
  return out;
}

inline std::string serialize_structured_answer(const StructuredAnswer& ans) {
  using detail::format_number;
  auto box_text = [](const Box2D& b) {
    return "[" + format_number(b.x1) + "," + format_number(b.y1) + "," + format_number(b.x2) +
           "," + format_number(b.y2) + "]";
  };
  auto point_text = [](const Point2D& p) {
    return "[" + format_number(p.x) + "," + format_number(p.y) + "]";
  };
  if (ans.boxes.empty() || ans.keypoints.empty()) {
    throw Error(ErrorCode::InvalidArgument, "answer needs at least one box and one keypoint");
  }
  std::string out = "{";
  if (ans.boxes.size() == 1) {
    out += "bbox:" + box_text(ans.boxes.front());
  } else {
    out += "bboxes:[";
    for (std::size_t i = 0; i < ans.boxes.size(); ++i) {
      if (i) out += ",";
      out += box_text(ans.boxes[i]);
    }
    out += "]";
  }
  out += ", point:" + point_text(ans.keypoints.front());
  if (ans.keypoints.size() > 1) {
    out += ", aux_points:[";
    for (std::size_t i = 1; i < ans.keypoints.size(); ++i) {
      if (i > 1) out += ",";
      out += point_text(ans.keypoints[i]);
    }
    out += "]";
  }
  out += ", aff_methods: " + ans.aff_method + ", aff_parts: " + ans.aff_part + "}";
  return out;
}

}  // namespace affgr
