#include "comicvox/dump.hpp"

#include <fstream>
#include <sstream>

#include "comicvox/error.hpp"

namespace comicvox {

using json = nlohmann::json;

namespace {

json box_json(const BBox& b) { return {b.xmin, b.ymin, b.xmax, b.ymax}; }

BBox box_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

}  // namespace

json to_json(const FrameSequence& seq) {
  json assignment = json::object();
  for (const auto& [id, frame] : seq.assignment) assignment[id] = frame ? json(*frame) : json();
  return {{"ordered_frames", seq.ordered_frames},
          {"assignment", assignment},
          {"merged_into", seq.merged_into}};
}

FrameSequence frame_sequence_from_json(const json& j) {
  FrameSequence seq;
  seq.ordered_frames = j.at("ordered_frames").get<std::vector<std::string>>();
  for (const auto& [id, frame] : j.at("assignment").items()) {
    seq.assignment[id] = frame.is_null() ? std::nullopt : std::optional(frame.get<std::string>());
  }
  seq.merged_into = j.value("merged_into", std::map<std::string, std::string>{});
  return seq;
}

std::string dump_corpus(const TitleCorpus& corpus, const std::map<int, PageLayout>* layouts) {
  std::string out;
  json roster = json::array();
  for (const auto& c : corpus.roster) roster.push_back({{"id", c.id}, {"name", c.name}});
  out += json{{"kind", "title"}, {"schema", kCorpusSchema}, {"title", corpus.title_id},
              {"characters", roster}}
             .dump() +
         "\n";
  std::map<std::string, std::string> speakers;
  for (const auto& l : corpus.links) speakers[l.text_element_id] = l.speaker_character_id;
  for (const auto& p : corpus.pages) {
    json frames = json::array();
    for (const auto& f : p.frames) frames.push_back({{"id", f.id}, {"bbox", box_json(f.box)}});
    json texts = json::array();
    for (const auto& t : p.texts) {
      json obj = {{"id", t.id}, {"bbox", box_json(t.box)}, {"content", t.content}};
      if (auto s = speakers.find(t.id); s != speakers.end()) obj["speaker"] = s->second;
      texts.push_back(std::move(obj));
    }
    json bodies = json::array();
    for (const auto& b : p.bodies) {
      bodies.push_back({{"id", b.id}, {"bbox", box_json(b.box)}, {"character", b.character_id}});
    }
    json faces = json::array();
    for (const auto& f : p.faces) {
      json obj = {{"id", f.id}, {"bbox", box_json(f.box)}, {"character", f.character_id}};
      if (f.emotion) obj["emotion"] = std::string(to_string(*f.emotion));
      faces.push_back(std::move(obj));
    }
    json page = {{"kind", "page"},   {"title", corpus.title_id}, {"page", p.page_index},
                 {"width", p.width}, {"height", p.height},       {"frames", frames},
                 {"texts", texts},   {"bodies", bodies},         {"faces", faces}};
    if (layouts) {
      if (auto it = layouts->find(p.page_index); it != layouts->end()) {
        page["layout"] = to_json(it->second.seq);
      }
    }
    out += page.dump() + "\n";
  }
  return out;
}

std::vector<DumpedTitle> read_corpus_dump(std::string_view text) {
  std::vector<DumpedTitle> out;
  int line_no = 0;
  for (const auto& obj : parse_jsonl(text, "<corpus dump>")) {
    ++line_no;
    try {
      const auto kind = obj.at("kind").get<std::string>();
      if (kind == "title") {
        DumpedTitle t;
        t.corpus.title_id = obj.at("title").get<std::string>();
        for (const auto& c : obj.at("characters")) {
          t.corpus.roster.push_back({c.at("id").get<std::string>(), c.at("name").get<std::string>()});
        }
        out.push_back(std::move(t));
        continue;
      }
      if (kind != "page") throw ParseError("unknown line kind " + kind);
      if (out.empty() || out.back().corpus.title_id != obj.at("title").get<std::string>()) {
        throw ParseError("page line outside its title block");
      }
      auto& title = out.back();
      PageAnnotation p;
      p.title_id = title.corpus.title_id;
      p.page_index = obj.at("page").get<int>();
      p.width = obj.at("width").get<int>();
      p.height = obj.at("height").get<int>();
      for (const auto& f : obj.at("frames")) {
        p.frames.push_back({f.at("id").get<std::string>(), box_from(f.at("bbox"))});
      }
      for (const auto& t : obj.at("texts")) {
        p.texts.push_back({t.at("id").get<std::string>(), box_from(t.at("bbox")),
                           t.at("content").get<std::string>()});
        if (auto s = t.find("speaker"); s != t.end()) {
          title.corpus.links.push_back({p.title_id, p.texts.back().id, s->get<std::string>()});
        }
      }
      for (const auto& b : obj.at("bodies")) {
        p.bodies.push_back({b.at("id").get<std::string>(), box_from(b.at("bbox")),
                            b.at("character").get<std::string>()});
      }
      for (const auto& f : obj.at("faces")) {
        FaceAnnotation face{f.at("id").get<std::string>(), box_from(f.at("bbox")),
                            f.at("character").get<std::string>(), std::nullopt};
        if (auto e = f.find("emotion"); e != f.end()) {
          face.emotion = emotion_from_string(e->get<std::string>());
          if (!face.emotion) throw ParseError("unknown emotion " + e->get<std::string>());
        }
        p.faces.push_back(std::move(face));
      }
      if (auto l = obj.find("layout"); l != obj.end()) {
        title.layouts[p.page_index] = frame_sequence_from_json(*l);
      }
      title.corpus.pages.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), "<corpus dump>", line_no);
    }
  }
  return out;
}

json to_json(const LinkedSample& s) {
  return {{"title", s.title_id},
          {"text_id", s.text_element_id},
          {"page", s.page_index},
          {"content", s.content},
          {"gt_speaker", s.gt_speaker},
          {"gt_emotion", s.gt_emotion ? json(std::string(to_string(*s.gt_emotion))) : json()}};
}

LinkedSample linked_sample_from_json(const json& j) {
  LinkedSample s;
  s.title_id = j.at("title").get<std::string>();
  s.text_element_id = j.at("text_id").get<std::string>();
  s.page_index = j.at("page").get<int>();
  s.content = j.at("content").get<std::string>();
  s.gt_speaker = j.at("gt_speaker").get<std::string>();
  if (auto e = j.find("gt_emotion"); e != j.end() && e->is_string()) {
    s.gt_emotion = emotion_from_string(e->get<std::string>());
  }
  return s;
}

std::vector<json> parse_jsonl(std::string_view text, const std::string& source) {
  std::vector<json> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto obj = json::parse(line, nullptr, false);
    if (obj.is_discarded()) throw ParseError("malformed JSON line", source, line_no);
    out.push_back(std::move(obj));
  }
  return out;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str(), path);
}

}  // namespace comicvox
