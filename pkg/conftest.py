import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'reduktor_site.settings')
django.setup()
