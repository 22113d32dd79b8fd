"""Regenerates the JSONL fixtures in this directory."""
import json, os, random
out = os.path.dirname(os.path.abspath(__file__)) + "/"
def rec(i, lang, turns, gt, source="fixture"):
    return {"id": i, "language": lang, "source": source,
            "turns": [{"role": r, "text": t} for r, t in turns], "ground_truth": gt}
def dump(name, rows):
    with open(out + name, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")

mini = [
    rec("en-1", "en", [("user", "I failed my driving test again today."),
                       ("system", "I'm sorry to hear that. What happened during the test?"),
                       ("user", "I got nervous at the roundabout and forgot to signal.")],
        "Nerves at roundabouts are common. Practising that junction a few times before the retest may help."),
    rec("zh-1", "zh", [("user", "最近工作压力很大，晚上总是睡不着。"),
                       ("system", "听起来你最近很辛苦。压力主要来自哪里呢？"),
                       ("user", "项目快到截止日期了，我担心完不成。")],
        "可以先把任务拆成小块，每天完成一部分，睡前留出半小时放松。"),
    rec("en-2", "en", [("user", "Can you recommend a book for a long flight?")],
        "A light mystery such as a classic detective novel is easy to pick up and put down."),
]
dump("mini.jsonl", mini)

lines = [json.dumps(mini[0], ensure_ascii=False), '{"id": "broken", "language": "en", "turns": [', json.dumps(mini[2], ensure_ascii=False)]
open(out + "bad_record.jsonl", "w").write("\n".join(lines) + "\n")

ed = [rec("ed-1", "en", [("user", "My dog passed away last week and the house feels empty.")],
          "I am so sorry for your loss. Losing a companion like that is really hard.", source="ed")]
dump("ed_shape.jsonl", ed)

rng = random.Random(7)
topics = ["my sister's wedding", "a new job offer", "moving to a new city", "my exam results",
          "a fight with my roommate", "learning to cook", "my first marathon", "a broken laptop",
          "adopting a cat", "planning a trip", "losing my wallet", "starting guitar lessons",
          "a noisy neighbour", "my grandmother's birthday"]
filler = ("I keep going over every detail in my head and I am not sure what to do next, "
          "because each option seems to have its own problems and I worry about choosing wrong. ")
val = []
long_ids = {2, 5, 9, 13, 16, 19}
t = 0
for i in range(20):
    sid = "v%02d" % i
    if i in long_ids:
        user = "I want to talk about something that has been bothering me since %s. " % sid + filler * 18
        turns = [("user", user), ("system", "Tell me more."), ("user", "What would you do?")]
    else:
        topic = topics[t % len(topics)]; t += 1
        turns = [("user", "I have been thinking about %s." % topic),
                 ("system", "That sounds important. How do you feel about it?"),
                 ("user", "Honestly a bit anxious, but also excited.")]
    val.append(rec(sid, "en", turns, "It is natural to feel both. Take it one step at a time."))
dump("validity20.jsonl", val)

pool = [
    {"id": "p-en-1", "language": "en", "source": "pool",
     "turns": [{"role": "user", "text": "I just got promoted but I feel like an impostor."}],
     "ground_truth": "Congratulations! Feeling unsure is normal in a new role; your track record earned this.",
     "status": "The user is anxious and lacks confidence despite a recent success.", "status_source": "human"},
    {"id": "p-en-2", "language": "en", "source": "pool",
     "turns": [{"role": "user", "text": "My flight was cancelled and I am stuck at the airport."}],
     "ground_truth": "That is frustrating. Ask the airline desk about rebooking and meal vouchers.",
     "status": "The user is stressed and frustrated, needs practical help quickly.", "status_source": "human"},
    {"id": "p-en-3", "language": "en", "source": "pool",
     "turns": [{"role": "user", "text": "I failed my exam and my parents will be upset."}],
     "ground_truth": "One exam does not define you. Talk to them honestly and plan for the resit.",
     "status": "The user is a worried student afraid of disappointing family.", "status_source": "human"},
    {"id": "p-zh-1", "language": "zh", "source": "pool",
     "turns": [{"role": "user", "text": "我和朋友吵架了，不知道要不要先道歉。"}],
     "ground_truth": "主动沟通往往能化解误会，可以先表达你珍惜这段友谊。",
     "status": "用户感到纠结和内疚，重视友情。", "status_source": "human"},
    {"id": "p-zh-2", "language": "zh", "source": "pool",
     "turns": [{"role": "user", "text": "工作太累了，我想辞职但又怕找不到新工作。"}],
     "ground_truth": "可以先在不辞职的情况下开始找机会，同时注意休息。",
     "status": "用户疲惫焦虑，担心经济风险，性格谨慎。", "status_source": "human"},
    {"id": "p-en-4", "language": "en", "source": "pool",
     "turns": [{"role": "user", "text": "Any tips for a first date at a restaurant?"}],
     "ground_truth": "Pick a place you know, ask open questions, and relax; it is about getting to know each other.",
     "status": None, "status_source": ""},
]
dump("pool.jsonl", pool)

seeds = [
    {"id": "s-en-1", "language": "en", "question": "How do I stop procrastinating on my thesis?",
     "answer": "Break it into small daily goals and track them.", "source": "forum"},
    {"id": "s-zh-1", "language": "zh", "question": "怎样才能不再拖延？",
     "answer": "把任务拆小，每天完成一点。", "source": "forum"},
]
dump("seeds.jsonl", seeds)
