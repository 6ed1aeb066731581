#pragma once

namespace selfreg::fixtures {

// Weak-feedback row of the cost examples table: three trigrams are marked.
inline constexpr const char* kWeakHyp =
    "And when her father saw them and saw who became them , in their full girl 's , he swallowed his arms "
    "around them and broke out in tears .";
inline constexpr const char* kWeakRef =
    "When her father saw her and saw who she had become , in her full girl self , he threw his arms around her "
    "and broke down crying .";
inline constexpr int kWeakMarks = 9;

// Full-feedback row; the published cost (59) came from a different diff
// heuristic, so the locally computed insert/delete count is pinned instead.
inline constexpr const char* kFullHyp =
    "And through these two features , I was able to create the images you now see .";
inline constexpr const char* kFullRef =
    "And it was with those two properties that I was able to create the images that you 're seeing right now .";

}  // namespace selfreg::fixtures
