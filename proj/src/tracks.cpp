#include "iamp/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "iamp/error.hpp"

namespace iamp {

std::optional<TrackPoint> Track::at(double t) const {
    if (samples.empty() || t < t_begin() - 1e-9 || t > t_end() + 1e-9) return std::nullopt;
    if (samples.size() == 1) return samples.front();
    double f = (t - samples.front().t) / kTrackDt;
    auto i = static_cast<std::size_t>(std::clamp(f, 0.0, double(samples.size() - 2)));
    i = std::min(i, samples.size() - 2);
    double w = std::clamp(f - static_cast<double>(i), 0.0, 1.0);
    const TrackPoint& p = samples[i];
    const TrackPoint& q = samples[i + 1];
    TrackPoint out;
    out.t = t;
    out.pos = p.pos + (q.pos - p.pos) * w;
    out.v = p.v + (q.v - p.v) * w;
    out.a = p.a + (q.a - p.a) * w;
    out.heading = p.heading + wrap_angle(q.heading - p.heading) * w;
    return out;
}

namespace {

// piecewise-linear interpolation of one channel over raw timestamps
double interp(const std::vector<double>& ts, const std::vector<double>& ys, double t) {
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    if (it == ts.begin()) return ys.front();
    if (it == ts.end()) return ys.back();
    std::size_t j = static_cast<std::size_t>(it - ts.begin());
    double w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
    return ys[j - 1] + (ys[j] - ys[j - 1]) * w;
}

}  // namespace

TrackDataset assemble_tracks(const std::vector<TrackRow>& rows, double frame_rate) {
    if (frame_rate <= 0.0) throw DataError("frame_rate must be positive");
    std::map<std::pair<int, int>, std::vector<const TrackRow*>> grouped;
    for (const auto& r : rows) grouped[{r.recording_id, r.track_id}].push_back(&r);

    std::map<int, Recording> recs;
    for (auto& [key, group] : grouped) {
        auto [rec_id, track_id] = key;
        for (std::size_t i = 1; i < group.size(); ++i) {
            if (group[i]->frame <= group[i - 1]->frame) {
                throw DataError("track " + std::to_string(track_id) + " in recording " +
                                std::to_string(rec_id) + " has non-increasing frames");
            }
        }
        std::vector<double> ts, xs, ys, vs, as, hs;
        bool has_a = true;
        for (const auto* r : group) {
            ts.push_back(static_cast<double>(r->frame) / frame_rate);
            xs.push_back(r->x);
            ys.push_back(r->y);
            vs.push_back(r->v);
            has_a = has_a && r->a.has_value();
            as.push_back(r->a.value_or(0.0));
        }
        // unwrap headings so the interpolation never jumps across +-pi
        double prev = group.front()->heading;
        double acc = prev;
        for (const auto* r : group) {
            acc += wrap_angle(r->heading - prev);
            prev = r->heading;
            hs.push_back(acc);
        }

        Track tr;
        tr.id = track_id;
        tr.length = group.front()->length;
        tr.width = group.front()->width;
        double t0 = ts.front();
        auto n = static_cast<std::size_t>(std::floor((ts.back() - t0) / kTrackDt + 1e-9)) + 1;
        for (std::size_t k = 0; k < n; ++k) {
            double t = t0 + static_cast<double>(k) * kTrackDt;
            TrackPoint p;
            p.t = t;
            p.pos = {interp(ts, xs, t), interp(ts, ys, t)};
            p.heading = wrap_angle(interp(ts, hs, t));
            p.v = interp(ts, vs, t);
            p.a = has_a ? interp(ts, as, t) : 0.0;
            tr.samples.push_back(p);
        }
        if (!has_a) {
            auto& s = tr.samples;
            for (std::size_t k = 0; k < s.size(); ++k) {
                if (s.size() == 1) {
                    s[k].a = 0.0;
                } else if (k == 0) {
                    s[k].a = (s[1].v - s[0].v) / kTrackDt;
                } else if (k + 1 == s.size()) {
                    s[k].a = (s[k].v - s[k - 1].v) / kTrackDt;
                } else {
                    s[k].a = (s[k + 1].v - s[k - 1].v) / (2.0 * kTrackDt);
                }
            }
        }
        auto& rec = recs[rec_id];
        rec.id = rec_id;
        rec.frame_rate = frame_rate;
        rec.tracks.push_back(std::move(tr));
    }

    TrackDataset ds;
    for (auto& [id, rec] : recs) ds.recordings.push_back(std::move(rec));
    return ds;
}

std::string sidecar_path(const std::string& csv_path) {
    auto dot = csv_path.find_last_of('.');
    auto slash = csv_path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
        return csv_path + ".json";
    }
    return csv_path.substr(0, dot) + ".json";
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double to_double(const std::string& s, int row) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("bad number '" + s + "' in tracks row " + std::to_string(row));
    }
}

}  // namespace

TrackDataset ingest_tracks(const std::string& path) {
    std::ifstream meta(sidecar_path(path));
    if (!meta) {
        throw ParseError("missing sidecar " + sidecar_path(path) +
                         " (expected {\"frame_rate\": ...})");
    }
    double frame_rate = 0.0;
    try {
        frame_rate = nlohmann::json::parse(meta).at("frame_rate").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad sidecar " + sidecar_path(path) + ": " + e.what());
    }

    std::ifstream in(path);
    if (!in) throw ParseError("cannot open tracks file " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty tracks file " + path);
    auto header = split_csv_line(line);
    auto col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    };
    const char* required[] = {"recording_id", "track_id", "frame", "x",
                              "y",            "heading",  "v",     "length",
                              "width"};
    for (const char* name : required) {
        if (col(name) < 0) throw ParseError("tracks file misses column '" + std::string(name) + "'");
    }
    int c_rec = col("recording_id"), c_track = col("track_id"), c_frame = col("frame");
    int c_x = col("x"), c_y = col("y"), c_h = col("heading"), c_v = col("v");
    int c_a = col("a"), c_len = col("length"), c_w = col("width");

    std::vector<TrackRow> rows;
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw ParseError("tracks row " + std::to_string(row_no) + " has " +
                             std::to_string(f.size()) + " fields, expected " +
                             std::to_string(header.size()));
        }
        TrackRow r;
        r.recording_id = static_cast<int>(to_double(f[c_rec], row_no));
        r.track_id = static_cast<int>(to_double(f[c_track], row_no));
        r.frame = static_cast<long>(to_double(f[c_frame], row_no));
        r.x = to_double(f[c_x], row_no);
        r.y = to_double(f[c_y], row_no);
        r.heading = to_double(f[c_h], row_no);
        r.v = to_double(f[c_v], row_no);
        if (c_a >= 0) r.a = to_double(f[c_a], row_no);
        r.length = to_double(f[c_len], row_no);
        r.width = to_double(f[c_w], row_no);
        rows.push_back(r);
    }
    return assemble_tracks(rows, frame_rate);
}

void write_tracks_csv(const std::string& path, const std::vector<TrackRow>& rows,
                      double frame_rate) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write tracks file " + path);
    out << "recording_id,track_id,frame,x,y,heading,v,a,length,width\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.recording_id, r.track_id, r.frame, r.x, r.y, r.heading, r.v,
                      r.a.value_or(0.0), r.length, r.width);
        out << buf;
    }
    std::ofstream meta(sidecar_path(path));
    if (!meta) throw ParseError("cannot write sidecar for " + path);
    meta << nlohmann::json{{"frame_rate", frame_rate}}.dump(2) << "\n";
}

}  // namespace iamp
