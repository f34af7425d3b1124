"""
Homepage text extraction and preprocessing
==========================================

A candidate website is reduced to five text components (title, three
metadata fields, body text), optionally translated, then tokenized. Keyword
matching later runs on the pre-lemmatization tokens, so "IP" and "IPs"
remain distinct signals.
"""

from resipmon.crawl import (TableTranslator, detect_and_translate,
                            extract_text_bundle, preprocess)

HOMEPAGE = b"""
<html><head>
  <title>FastProxy - Buy Residential Proxies</title>
  <meta name="description" content="90M+ rotating residential IPs">
  <meta name="keywords" content="residential proxy, rotating proxy, buy proxies">
</head><body>
  <h1>Premium residential proxy network</h1>
  <p>Buy rotating residential proxies with flexible pricing. Our IPs come
     from real home networks in 200+ countries.</p>
  <script>trackVisit();</script>
</body></html>
"""

bundle = extract_text_bundle(HOMEPAGE)
print("title:      ", bundle.title)
print("description:", bundle.description_meta)
print("keywords:   ", bundle.keywords_meta)
print("body:       ", bundle.body_text[:70], "...")
# script content never leaks into the body text
assert "trackVisit" not in bundle.body_text

# Language handling: detection is automatic; without a configured translator
# a Chinese page passes through and the classifier's bilingual fallback
# takes over downstream.
zh = extract_text_bundle("<html><body>住宅代理服务 购买代理</body></html>".encode())
zh = detect_and_translate(zh)
print("\nuntranslated page language:", zh.language)

stub = TableTranslator({"住宅代理": "residential proxy", "购买": "buy",
                        "服务": "service", "代理": "proxy"})
translated = detect_and_translate(extract_text_bundle(
    "<html><body>住宅代理服务 购买代理</body></html>".encode()), stub)
print("with a translator plugged in:", translated.body_text)

# Tokenization: lowercase word tokens, stopwords dropped, body count taken
# before lemmatization.
tokens = preprocess(detect_and_translate(bundle))
print("\nfirst body tokens:", tokens.body[:8])
print("body_token_count: ", tokens.body_token_count)
print("lemmatized view:  ", tokens.lemmas[4][:8])
