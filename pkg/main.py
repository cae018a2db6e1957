from dotenv import load_dotenv

from app.zk import ZKAppWrapper

load_dotenv()
app: ZKAppWrapper = ZKAppWrapper()

if __name__ == "__main__":
    app()
