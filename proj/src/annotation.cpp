#include "comicvox/annotation.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "comicvox/error.hpp"

namespace comicvox {

namespace pt = boost::property_tree;
using json = nlohmann::json;

const Character* TitleCorpus::find_character(std::string_view id) const {
  for (const auto& c : roster) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::size_t TitleCorpus::emotion_annotation_count() const {
  std::size_t n = 0;
  for (const auto& page : pages) {
    for (const auto& face : page.faces) {
      if (face.emotion) ++n;
    }
  }
  return n;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int int_attr(const pt::ptree& attrs, const char* key, const std::string& src,
             const std::string& where) {
  const auto raw = attrs.get_optional<std::string>(key);
  if (!raw) throw ParseError(where + ": missing attribute '" + key + "'", src);
  try {
    std::size_t used = 0;
    const int v = std::stoi(*raw, &used);
    if (used != raw->size()) throw std::invalid_argument(*raw);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": attribute '" + key + "' is not an integer: " + *raw,
                     src);
  }
}

std::string str_attr(const pt::ptree& attrs, const char* key,
                     const std::string& src, const std::string& where) {
  const auto raw = attrs.get_optional<std::string>(key);
  if (!raw) throw ParseError(where + ": missing attribute '" + key + "'", src);
  return *raw;
}

// Clamps to the page; returns nullopt when nothing valid remains.
std::optional<BBox> page_box(BBox box, int width, int height) {
  box.xmin = std::clamp(box.xmin, 0, width);
  box.xmax = std::clamp(box.xmax, 0, width);
  box.ymin = std::clamp(box.ymin, 0, height);
  box.ymax = std::clamp(box.ymax, 0, height);
  if (!box.valid()) return std::nullopt;
  return box;
}

template <typename Fn>
void for_each_jsonl(std::string_view text, const std::string& src, Fn&& fn) {
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), src, line_no);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", src, line_no);
    fn(obj, line_no);
  }
}

std::string json_str(const json& obj, const char* key, const std::string& src,
                     int line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(std::string("missing string field '") + key + "'", src, line);
  }
  return it->get<std::string>();
}

}  // namespace

TitleCorpus parse_title_text(std::string_view xml, std::string_view speaker_jsonl,
                             std::string_view emotion_jsonl,
                             const std::string& source_name) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(e.message(), source_name, static_cast<int>(e.line()));
  }
  const auto book = doc.get_child_optional("book");
  if (!book) throw ParseError("missing root <book> element", source_name);

  TitleCorpus corpus;
  corpus.title_id = book->get<std::string>("<xmlattr>.title", "");
  if (corpus.title_id.empty()) {
    throw ParseError("<book> has no title attribute", source_name);
  }

  std::set<std::string> roster_ids;
  if (auto chars = book->get_child_optional("characters")) {
    for (const auto& [tag, node] : *chars) {
      if (tag != "character") continue;
      const auto& attrs = node.get_child("<xmlattr>", pt::ptree{});
      Character c{str_attr(attrs, "id", source_name, "<character>"),
                  attrs.get<std::string>("name", "")};
      if (!roster_ids.insert(c.id).second) {
        corpus.warnings.push_back("duplicate character id " + c.id + " dropped");
        continue;
      }
      corpus.roster.push_back(std::move(c));
    }
  }

  std::set<std::string> element_ids;
  if (auto pages = book->get_child_optional("pages")) {
    for (const auto& [tag, node] : *pages) {
      if (tag != "page") continue;
      const auto& pattrs = node.get_child("<xmlattr>", pt::ptree{});
      PageAnnotation page;
      page.title_id = corpus.title_id;
      page.page_index = int_attr(pattrs, "index", source_name, "<page>");
      page.width = int_attr(pattrs, "width", source_name, "<page>");
      page.height = int_attr(pattrs, "height", source_name, "<page>");
      if (page.page_index < 0 || page.width <= 0 || page.height <= 0) {
        throw ParseError("page " + std::to_string(page.page_index) +
                             " has invalid index or size",
                         source_name);
      }
      for (const auto& [etag, enode] : node) {
        if (etag != "frame" && etag != "text" && etag != "body" && etag != "face") {
          continue;
        }
        const auto& a = enode.get_child("<xmlattr>", pt::ptree{});
        const auto where = "<" + etag + "> on page " + std::to_string(page.page_index);
        const auto id = str_attr(a, "id", source_name, where);
        const BBox raw{int_attr(a, "xmin", source_name, where),
                       int_attr(a, "ymin", source_name, where),
                       int_attr(a, "xmax", source_name, where),
                       int_attr(a, "ymax", source_name, where)};
        if (!element_ids.insert(id).second) {
          corpus.warnings.push_back("duplicate element id " + id + " dropped");
          continue;
        }
        const auto box = page_box(raw, page.width, page.height);
        if (!box) {
          corpus.warnings.push_back("element " + id + " has an empty box, dropped");
          continue;
        }
        if (*box != raw) {
          corpus.warnings.push_back("element " + id + " clamped to page bounds");
        }
        if (etag == "frame") {
          page.frames.push_back({id, *box});
        } else if (etag == "text") {
          page.texts.push_back({id, *box, enode.get_value<std::string>()});
        } else {
          const auto character = str_attr(a, "character", source_name, where);
          if (!roster_ids.contains(character)) {
            corpus.warnings.push_back(etag + " " + id + " references unknown character " +
                                      character + ", dropped");
            continue;
          }
          if (etag == "body") {
            page.bodies.push_back({id, *box, character});
          } else {
            page.faces.push_back({id, *box, character, std::nullopt});
          }
        }
      }
      corpus.pages.push_back(std::move(page));
    }
  }
  std::stable_sort(corpus.pages.begin(), corpus.pages.end(),
                   [](const auto& a, const auto& b) { return a.page_index < b.page_index; });

  std::map<std::string, std::pair<std::size_t, std::size_t>> text_index;
  std::map<std::string, std::pair<std::size_t, std::size_t>> face_index;
  for (std::size_t p = 0; p < corpus.pages.size(); ++p) {
    for (std::size_t i = 0; i < corpus.pages[p].texts.size(); ++i) {
      text_index[corpus.pages[p].texts[i].id] = {p, i};
    }
    for (std::size_t i = 0; i < corpus.pages[p].faces.size(); ++i) {
      face_index[corpus.pages[p].faces[i].id] = {p, i};
    }
  }

  if (!emotion_jsonl.empty()) {
    for_each_jsonl(emotion_jsonl, source_name + " (emotion labels)",
                   [&](const json& obj, int line) {
                     const auto src = source_name + " (emotion labels)";
                     if (json_str(obj, "title", src, line) != corpus.title_id) return;
                     const auto face_id = json_str(obj, "face_id", src, line);
                     const auto label = json_str(obj, "label", src, line);
                     auto it = face_index.find(face_id);
                     if (it == face_index.end()) {
                       corpus.warnings.push_back("emotion label for unknown face " +
                                                 face_id + " dropped");
                       return;
                     }
                     const auto emotion = emotion_from_string(label);
                     if (!emotion) {
                       corpus.warnings.push_back("face " + face_id +
                                                 " has unknown emotion label '" + label +
                                                 "', dropped");
                       return;
                     }
                     corpus.pages[it->second.first].faces[it->second.second].emotion =
                         *emotion;
                   });
  }

  if (!speaker_jsonl.empty()) {
    std::set<std::string> linked;
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, SpeakerLink>> links;
    for_each_jsonl(speaker_jsonl, source_name + " (speaker links)",
                   [&](const json& obj, int line) {
                     const auto src = source_name + " (speaker links)";
                     if (json_str(obj, "title", src, line) != corpus.title_id) return;
                     SpeakerLink link{corpus.title_id, json_str(obj, "text_id", src, line),
                                      json_str(obj, "speaker_id", src, line)};
                     auto it = text_index.find(link.text_element_id);
                     if (it == text_index.end()) {
                       corpus.warnings.push_back("speaker link for unknown text " +
                                                 link.text_element_id + " dropped");
                       return;
                     }
                     if (!roster_ids.contains(link.speaker_character_id)) {
                       corpus.warnings.push_back("speaker link for text " +
                                                 link.text_element_id +
                                                 " names unknown character " +
                                                 link.speaker_character_id + ", dropped");
                       return;
                     }
                     if (!linked.insert(link.text_element_id).second) {
                       corpus.warnings.push_back("duplicate speaker link for text " +
                                                 link.text_element_id + " dropped");
                       return;
                     }
                     links.emplace_back(it->second, std::move(link));
                   });
    // links follow page order, then the text order within the page
    std::stable_sort(links.begin(), links.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [pos, link] : links) corpus.links.push_back(std::move(link));
  }
  return corpus;
}

TitleCorpus parse_title(const std::filesystem::path& annotation_file,
                        const std::optional<std::filesystem::path>& speaker_file,
                        const std::optional<std::filesystem::path>& emotion_file) {
  const auto xml = read_file(annotation_file);
  const auto speakers = speaker_file ? read_file(*speaker_file) : std::string{};
  const auto emotions = emotion_file ? read_file(*emotion_file) : std::string{};
  return parse_title_text(xml, speakers, emotions, annotation_file.string());
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

void write_box(std::ostringstream& out, const BBox& b) {
  out << " xmin=\"" << b.xmin << "\" ymin=\"" << b.ymin << "\" xmax=\"" << b.xmax
      << "\" ymax=\"" << b.ymax << "\"";
}

}  // namespace

std::string write_title_xml(const TitleCorpus& corpus) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
  out << "<book title=\"" << xml_escape(corpus.title_id) << "\">\n";
  out << "  <characters>\n";
  for (const auto& c : corpus.roster) {
    out << "    <character id=\"" << xml_escape(c.id) << "\" name=\"" << xml_escape(c.name)
        << "\"/>\n";
  }
  out << "  </characters>\n  <pages>\n";
  for (const auto& p : corpus.pages) {
    out << "    <page index=\"" << p.page_index << "\" width=\"" << p.width
        << "\" height=\"" << p.height << "\">\n";
    for (const auto& f : p.frames) {
      out << "      <frame id=\"" << xml_escape(f.id) << "\"";
      write_box(out, f.box);
      out << "/>\n";
    }
    for (const auto& t : p.texts) {
      out << "      <text id=\"" << xml_escape(t.id) << "\"";
      write_box(out, t.box);
      out << ">" << xml_escape(t.content) << "</text>\n";
    }
    for (const auto& b : p.bodies) {
      out << "      <body id=\"" << xml_escape(b.id) << "\"";
      write_box(out, b.box);
      out << " character=\"" << xml_escape(b.character_id) << "\"/>\n";
    }
    for (const auto& f : p.faces) {
      out << "      <face id=\"" << xml_escape(f.id) << "\"";
      write_box(out, f.box);
      out << " character=\"" << xml_escape(f.character_id) << "\"/>\n";
    }
    out << "    </page>\n";
  }
  out << "  </pages>\n</book>\n";
  return out.str();
}

std::string write_speaker_links(const TitleCorpus& corpus) {
  std::string out;
  for (const auto& l : corpus.links) {
    json obj = {{"title", l.title_id}, {"text_id", l.text_element_id},
                {"speaker_id", l.speaker_character_id}};
    out += obj.dump() + "\n";
  }
  return out;
}

std::string write_emotion_labels(const TitleCorpus& corpus) {
  std::string out;
  for (const auto& p : corpus.pages) {
    for (const auto& f : p.faces) {
      if (!f.emotion) continue;
      json obj = {{"title", corpus.title_id}, {"face_id", f.id},
                  {"label", std::string(to_string(*f.emotion))}};
      out += obj.dump() + "\n";
    }
  }
  return out;
}

std::vector<LinkedSample> build_linked_set(const TitleCorpus& corpus) {
  std::map<std::string, const PageAnnotation*> page_of_text;
  std::map<std::string, const TextAnnotation*> text_by_id;
  for (const auto& page : corpus.pages) {
    for (const auto& t : page.texts) {
      page_of_text[t.id] = &page;
      text_by_id[t.id] = &t;
    }
  }
  std::vector<LinkedSample> out;
  for (const auto& link : corpus.links) {
    auto it = text_by_id.find(link.text_element_id);
    if (it == text_by_id.end()) continue;
    const auto& text = *it->second;
    const auto& page = *page_of_text.at(link.text_element_id);
    LinkedSample sample{corpus.title_id, text.id, page.page_index, text.content,
                        link.speaker_character_id, std::nullopt};
    const FaceAnnotation* best = nullptr;
    std::int64_t best_d = 0;
    for (const auto& face : page.faces) {
      if (face.character_id != link.speaker_character_id || !face.emotion) continue;
      const auto d = center_distance_key(face.box, text.box);
      // id tie-break keeps the join independent of XML sibling order
      if (!best || d < best_d || (d == best_d && face.id < best->id)) {
        best = &face;
        best_d = d;
      }
    }
    if (best) sample.gt_emotion = best->emotion;
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<std::string> select_test_titles(std::span<const TitleCorpus> corpora,
                                            std::size_t n) {
  if (n > corpora.size()) {
    throw ArgumentError("requested " + std::to_string(n) + " test titles but only " +
                        std::to_string(corpora.size()) + " corpora given");
  }
  std::vector<std::pair<std::size_t, std::string>> ranked;
  ranked.reserve(corpora.size());
  for (const auto& c : corpora) ranked.emplace_back(c.emotion_annotation_count(), c.title_id);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].second);
  return out;
}

}  // namespace comicvox
